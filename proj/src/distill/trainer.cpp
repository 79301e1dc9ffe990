#include "dfir/distill/trainer.hpp"

#include <cmath>
#include <iostream>
#include <optional>

#include "dfir/core/dataset.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/diffusion/pretrain.hpp"
#include "dfir/distill/losses.hpp"
#include "dfir/eval/evaluate.hpp"
#include "dfir/nets/train.hpp"

namespace dfir::distill {

namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

torch::Tensor draw_indices(Rng& rng, int64_t n, int count) {
  std::vector<int64_t> idx(count);
  for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<std::uint64_t>(n)));
  return torch::tensor(idx, torch::kInt64);
}

void freeze(torch::nn::Module& m) {
  m.eval();
  for (auto& p : m.parameters()) p.set_requires_grad(false);
}

json config_summary(const DistillConfig& c) {
  return {{"student", {{"base_width", c.student.base_width}, {"depth", c.student.depth}}},
          {"joint_epochs", c.joint_epochs},
          {"kd_epochs", c.kd_epochs},
          {"batch_size", c.batch_size},
          {"lr_student", c.lr_student},
          {"lr_adapter", c.lr_adapter},
          {"lr_halving_every", c.lr_halving_every},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"temperature", c.contrast.temperature},
          {"grad_steps", c.grad_steps},
          {"cache_generated", c.cache_generated},
          {"seed", c.seed}};
}

}  // namespace

double dataset_kd_objective(nets::RestorationNet& teacher, nets::RestorationNet& student, const torch::Tensor& images,
                            int64_t chunk) {
  torch::NoGradGuard no_grad;
  teacher->eval();
  student->eval();
  double total = 0.0;
  for (int64_t s = 0; s < images.size(0); s += chunk) {
    const auto x = images.slice(0, s, s + chunk);
    total += kd_loss(teacher->forward(x), student->forward(x)).item<double>() * x.size(0);
  }
  return total / images.size(0);
}

Checkpoint train_distill(const DistillVariant& variant, const DistillData& data, nets::RestorationNet teacher,
                         diffusion::LatentDiffusion* ld, const DistillConfig& config, const std::string& fingerprint,
                         const Checkpoint* resume, const LogSink& log) {
  const bool direct = variant.z0 == Z0Source::kDirect;
  if (!data.degraded.defined() || data.degraded.size(0) == 0)
    throw ValidationError("distillation: no degraded images to draw from");
  if (!direct) {
    if (ld == nullptr) throw MissingArtifactError("distillation: variant '" + variant.name + "' needs the diffusion model");
    if (!data.clean.defined() || data.clean.size(0) == 0)
      throw ValidationError("distillation: no clean images for generation");
    if (variant.prompt == PromptSource::kClassToken &&
        data.degraded_kinds.size() != static_cast<std::size_t>(data.degraded.size(0)))
      throw ValidationError("distillation: class-token prompts need a kind per degraded image");
  }
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) throw ValidationError("distillation: lambda must be in [0, 1]");
  if (config.batch_size < 1) throw ValidationError("distillation: batch_size must be positive");

  const int spe = config.steps_per_epoch > 0
                      ? config.steps_per_epoch
                      : static_cast<int>((data.degraded.size(0) + config.batch_size - 1) / config.batch_size);
  const int total_epochs = config.joint_epochs + config.kd_epochs;
  const int total_steps = total_epochs * spe;
  const int stop = config.max_steps >= 0 ? std::min(config.max_steps, total_steps) : total_steps;

  freeze(*teacher);
  const std::string teacher_hash = weights_hash(*teacher);
  std::string diffusion_hash;
  if (ld) {
    ld->freeze();
    diffusion_hash = ld->weights_hash();
  }

  torch::manual_seed(derive_seed(config.seed, {0}));
  nets::RestorationNet student(config.student);
  if (config.init_from_teacher) {
    if (teacher->options().base_width != config.student.base_width || teacher->options().depth != config.student.depth)
      throw ValidationError("init_from_teacher requires equal teacher and student widths");
    torch::NoGradGuard ng;
    auto dst = student->parameters();
    auto src = teacher->parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].copy_(src[i]);
  }

  const bool use_adapter = !direct && variant.prompt == PromptSource::kAdapter;
  const bool use_content = !direct && variant.prompt == PromptSource::kContent;
  std::optional<prompt::PromptContrast> contrast;
  torch::nn::Linear content_proj{nullptr};
  std::vector<torch::Tensor> adapter_params;
  if (use_adapter) {
    prompt::PromptEncoderOptions eo = config.encoder;
    eo.embed_dim = ld->config().unet.context_dim;
    contrast.emplace(prompt::PromptEncoder(eo), config.contrast, derive_seed(config.seed, {4}));
    adapter_params = contrast->encoder()->parameters();
  }
  if (use_content) {
    content_proj = torch::nn::Linear(ld->config().autoencoder.latent_channels, ld->config().unet.context_dim);
    adapter_params = content_proj->parameters();
  }

  const auto student_params = student->parameters();
  torch::optim::Adam opt_student(student_params, torch::optim::AdamOptions(config.lr_student)
                                                     .betas({config.beta1, config.beta2}));
  std::optional<torch::optim::Adam> opt_adapter;
  if (!adapter_params.empty())
    opt_adapter.emplace(adapter_params, torch::optim::AdamOptions(config.lr_adapter).betas({config.beta1, config.beta2}));

  std::vector<double> kd_trace, cl_trace, gamma_trace;
  json evals = json::array();
  int start = 0;
  if (resume) {
    if (resume->meta.value("kind", "") != "student") throw IntegrityError("resume: not a distillation checkpoint");
    if (resume->fingerprint() != fingerprint)
      throw IntegrityError("resume: checkpoint fingerprint " + resume->fingerprint() + " does not match config " +
                           fingerprint);
    if (resume->meta.value("variant", "") != variant.name) throw IntegrityError("resume: variant mismatch");
    restore_module(*resume, "net", *student);
    if (contrast) contrast->restore(*resume, "dpa");
    if (content_proj) restore_module(*resume, "content", *content_proj);
    restore_adam_state(*resume, "optim/student", opt_student, student_params);
    if (opt_adapter) restore_adam_state(*resume, "optim/adapter", *opt_adapter, adapter_params);
    start = resume->meta.at("train_state").at("step").get<int>();
    kd_trace = resume->meta.at("loss_trace").get<std::vector<double>>();
    cl_trace = resume->meta.at("cl_trace").get<std::vector<double>>();
    gamma_trace = resume->meta.at("gamma_trace").get<std::vector<double>>();
    evals = resume->meta.value("evals", json::array());
  }

  auto evaluate = [&](int step, int epoch) {
    if (!data.test_degraded.defined() || data.test_degraded.size(0) == 0) return json();
    const auto q = eval::evaluate_restoration(student, data.test_degraded, data.test_clean);
    student->train();
    json rec = {{"eval", true}, {"step", step}, {"epoch", epoch}, {"psnr", q.psnr}, {"ssim", q.ssim}};
    evals.push_back(rec);
    if (log) log(rec);
    return rec;
  };

  std::vector<torch::Tensor> cache(config.cache_generated ? spe : 0);
  const int64_t down = ld ? ld->config().autoencoder.downsampling : 1;
  const int64_t latent_h = data.degraded.size(2) / down;
  const int64_t latent_w = data.degraded.size(3) / down;

  student->train();
  for (int step = start; step < stop; ++step) {
    const int epoch = step / spe;
    const auto s = static_cast<std::uint64_t>(step);
    const double gamma = use_adapter ? gamma_at(epoch, config.gamma, config.joint_epochs) : 0.0;
    const double lr_s = lr_at(config.lr_student, epoch, config.lr_halving_every);
    const double lr_a = lr_at(config.lr_adapter, epoch, config.lr_halving_every);
    set_learning_rate(opt_student, lr_s);
    if (opt_adapter) set_learning_rate(*opt_adapter, lr_a);

    Rng rng(derive_seed(config.seed, {1, s}));
    const auto idx_deg = draw_indices(rng, data.degraded.size(0), config.batch_size);
    const auto x_bar = data.degraded.index_select(0, idx_deg);

    torch::Tensor x, cl;
    if (direct) {
      x = x_bar;
    } else if (config.cache_generated && cache[step % spe].defined()) {
      x = cache[step % spe];
    } else {
      const auto idx_clean = draw_indices(rng, data.clean.size(0), config.batch_size);
      const auto y_bar = data.clean.index_select(0, idx_clean);
      const bool keep_graph = (use_adapter || use_content) && !config.cache_generated;
      torch::AutoGradMode grad_mode(keep_graph);

      torch::Tensor prompt;
      switch (variant.prompt) {
        case PromptSource::kNone: prompt = ld->tokens->null_tokens(config.batch_size); break;
        case PromptSource::kClassToken: {
          std::vector<int64_t> kinds;
          for (int64_t i = 0; i < idx_deg.size(0); ++i) kinds.push_back(data.degraded_kinds[idx_deg[i].item<int64_t>()]);
          prompt = ld->tokens->forward(torch::tensor(kinds, torch::kInt64));
          break;
        }
        case PromptSource::kContent: {
          torch::Tensor pooled;
          {
            torch::NoGradGuard ng;
            pooled = ld->encode(y_bar).mean({2, 3});
          }
          prompt = F::normalize(content_proj(pooled), F::NormalizeFuncOptions().dim(1)).unsqueeze(1);
          break;
        }
        case PromptSource::kAdapter: prompt = contrast->encoder()->forward(x_bar); break;
      }
      if (use_adapter && gamma > 0.0) {
        torch::AutoGradMode cl_mode(true);
        cl = contrast->loss(x_bar, derive_seed(config.seed, {2, s}));
      }
      diffusion::GenerateOptions go{{config.ddim_form, config.grad_steps}, derive_seed(config.seed, {3, s})};
      x = variant.z0 == Z0Source::kNoisedWeb ? ld->generate(y_bar, prompt, config.lambda, go)
                                       : ld->sample(prompt, latent_h, latent_w, go);
      if (config.cache_generated) cache[step % spe] = x.detach();
    }

    torch::Tensor teacher_out;
    if (x.requires_grad()) {
      teacher_out = teacher->forward(x);
    } else {
      torch::NoGradGuard ng;
      teacher_out = teacher->forward(x);
    }
    const auto kd = kd_loss(teacher_out, student->forward(x));
    const auto loss = joint_loss(kd, cl, gamma);
    opt_student.zero_grad();
    if (opt_adapter) opt_adapter->zero_grad();
    loss.backward();
    opt_student.step();
    if (opt_adapter) opt_adapter->step();
    if (cl.defined()) contrast->commit();

    const double kd_v = kd.item<double>();
    const double cl_v = cl.defined() ? cl.item<double>() : 0.0;
    if (!std::isfinite(kd_v) || !std::isfinite(cl_v))
      throw Error("distillation diverged at step " + std::to_string(step) + " (non-finite loss)");
    kd_trace.push_back(kd_v);
    cl_trace.push_back(cl_v);
    gamma_trace.push_back(gamma);
    if (log)
      log({{"step", step}, {"epoch", epoch}, {"loss_kd", kd_v}, {"loss_cl", cl_v}, {"gamma", gamma}, {"lr", lr_s},
           {"lr_adapter", opt_adapter ? lr_a : 0.0}});
    const bool epoch_end = (step + 1) % spe == 0;
    if (epoch_end && config.eval_every_epochs > 0 && (epoch + 1) % config.eval_every_epochs == 0 && step + 1 < total_steps)
      evaluate(step + 1, epoch + 1);
  }

  if (weights_hash(*teacher) != teacher_hash) throw IntegrityError("teacher weights changed during distillation");
  if (ld && ld->weights_hash() != diffusion_hash)
    throw IntegrityError("diffusion weights changed during distillation");

  Checkpoint ckpt;
  ckpt.meta["kind"] = "student";
  ckpt.meta["variant"] = variant.name;
  ckpt.meta["variant_label"] = variant.label;
  ckpt.meta["z0_source"] = std::string(to_string(variant.z0));
  ckpt.meta["prompt_source"] = std::string(to_string(variant.prompt));
  ckpt.meta["fingerprint"] = fingerprint;
  ckpt.meta["config"] = config_summary(config);
  ckpt.meta["train_state"] = {{"step", stop},
                              {"epoch", stop / spe},
                              {"steps_per_epoch", spe},
                              {"total_steps", total_steps},
                              {"complete", stop == total_steps},
                              {"rng", "derived per step from seed"}};
  ckpt.meta["loss_trace"] = kd_trace;
  ckpt.meta["cl_trace"] = cl_trace;
  ckpt.meta["gamma_trace"] = gamma_trace;
  ckpt.meta["frozen_hashes"] = {{"teacher", teacher_hash}, {"diffusion", diffusion_hash}};
  const auto [first, last] = nets::decile_means(kd_trace);
  json metrics = {{"loss_first_decile", first}, {"loss_last_decile", last}};
  if (stop == total_steps) {
    const json final_eval = evaluate(stop, stop / spe);
    if (!final_eval.is_null()) {
      metrics["test_psnr"] = final_eval["psnr"];
      metrics["test_ssim"] = final_eval["ssim"];
    }
  }
  ckpt.meta["evals"] = evals;
  ckpt.meta["metrics"] = metrics;
  ckpt.meta["params"] = nets::param_count(*student);
  nets::store_restoration_net(ckpt, student);
  if (contrast) contrast->store(ckpt, "dpa");
  if (content_proj) store_module(ckpt, "content", *content_proj);
  store_adam_state(ckpt, "optim/student", opt_student, student_params);
  if (opt_adapter) store_adam_state(ckpt, "optim/adapter", *opt_adapter, adapter_params);
  return ckpt;
}

namespace {

DistillData web_data(const degrade::DatasetManifest& web_degraded, const degrade::DatasetManifest& web_clean) {
  if (web_degraded.paired() || web_clean.paired())
    std::cerr << "warning: paired manifest given to data-free distillation; pairing is ignored\n";
  DistillData d;
  const auto deg = web_degraded.select(degrade::Role::kDegraded);
  if (deg.empty()) throw ValidationError("distillation: web manifest has no degraded records");
  d.degraded = load_images(web_degraded, deg);
  for (const auto* r : deg) d.degraded_kinds.push_back(r->spec ? degrade::kind_index(r->spec->kind) : 0);
  const auto clean = web_clean.select(degrade::Role::kClean);
  if (clean.empty()) throw ValidationError("distillation: web manifest has no clean records");
  d.clean = load_images(web_clean, clean);
  return d;
}

}  // namespace

Checkpoint train_d4ir(const degrade::DatasetManifest& web_degraded, const degrade::DatasetManifest& web_clean,
                      const Checkpoint& teacher_ckpt, const Checkpoint& diffusion_ckpt, const DistillConfig& config,
                      const std::string& fingerprint, const LogSink& log) {
  auto ld = diffusion::load_diffusion(diffusion_ckpt);
  return train_distill(variant_by_name("d4ir"), web_data(web_degraded, web_clean),
                       nets::load_restoration_net(teacher_ckpt), &ld, config, fingerprint, nullptr, log);
}

Checkpoint distill_on_dataset(const degrade::DatasetManifest& degraded, const Checkpoint& teacher_ckpt,
                              const DistillConfig& config, const std::string& fingerprint, const LogSink& log) {
  const auto recs = degraded.select(degrade::Role::kDegraded, degrade::Split::kTrain);
  if (recs.empty()) throw ValidationError("distill_on_dataset: manifest has no degraded training records");
  DistillData d;
  d.degraded = load_images(degraded, recs);
  return train_distill(variant_by_name("data"), d, nets::load_restoration_net(teacher_ckpt), nullptr, config,
                       fingerprint, nullptr, log);
}

}  // namespace dfir::distill
