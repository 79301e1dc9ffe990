#include "dfir/diffusion/pretrain.hpp"

#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/degrade/apply.hpp"
#include "dfir/eval/evaluate.hpp"
#include "dfir/nets/train.hpp"

namespace dfir::diffusion {

namespace F = torch::nn::functional;

namespace {

torch::Tensor draw_indices(Rng& rng, int64_t n, int count) {
  std::vector<int64_t> idx(count);
  for (auto& i : idx) i = static_cast<int64_t>(rng.below(static_cast<std::uint64_t>(n)));
  return torch::tensor(idx, torch::kInt64);
}

nlohmann::json loss_summary(const std::vector<double>& trace) {
  const auto [first, last] = nets::decile_means(trace);
  return {{"loss_first_decile", first}, {"loss_last_decile", last}};
}

}  // namespace

LabeledPool degrade_pool(const std::vector<Image>& clean, const degrade::DomainProfile& profile, int copies,
                         std::uint64_t seed) {
  if (clean.empty() || copies < 1) throw ValidationError("degrade_pool: need images and copies >= 1");
  std::vector<Image> out;
  LabeledPool pool;
  for (int c = 0; c < copies; ++c)
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const std::uint64_t k = static_cast<std::uint64_t>(c) * clean.size() + i;
      const auto spec = degrade::sample_spec(profile, derive_seed(seed, {0, k}));
      out.push_back(degrade::apply_degradation(clean[i], spec, derive_seed(seed, {1, k})));
      pool.kinds.push_back(degrade::kind_index(spec.kind));
    }
  pool.images = to_tensor(out);
  return pool;
}

Checkpoint pretrain_autoencoder(const torch::Tensor& images, const torch::Tensor& held_out,
                                const AutoencoderTrainConfig& config, const std::string& fingerprint) {
  if (images.dim() != 4 || images.size(0) == 0) throw ValidationError("pretrain_autoencoder: empty training set");
  torch::manual_seed(config.seed);
  TinyAutoencoder ae(config.net);
  torch::optim::Adam opt(ae->parameters(), torch::optim::AdamOptions(config.lr));
  std::vector<double> trace;
  ae->train();
  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(step)}));
    const auto batch = images.index_select(0, draw_indices(rng, images.size(0), config.batch_size));
    const auto z = ae->encode(batch);
    const auto loss = F::l1_loss(ae->decode(z), batch) + config.latent_penalty * z.pow(2).mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
    trace.push_back(loss.item<double>());
  }

  ae->eval();
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> latents;
  for (int64_t s = 0; s < images.size(0); s += 64) latents.push_back(ae->encode(images.slice(0, s, s + 64)));
  const double latent_std = torch::cat(latents).std().item<double>();

  Checkpoint ckpt;
  ckpt.meta["kind"] = "autoencoder";
  ckpt.meta["fingerprint"] = fingerprint;
  ckpt.meta["autoencoder"] = {{"width", config.net.width},
                              {"latent_channels", config.net.latent_channels},
                              {"downsampling", config.net.downsampling}};
  ckpt.meta["latent_scale"] = latent_std > 0 ? 1.0 / latent_std : 1.0;
  ckpt.meta["loss_trace"] = trace;
  nlohmann::json metrics = loss_summary(trace);
  if (held_out.defined() && held_out.size(0) > 0) {
    std::vector<torch::Tensor> recon;
    for (int64_t s = 0; s < held_out.size(0); s += 64) recon.push_back(ae->forward(held_out.slice(0, s, s + 64)));
    const auto score = eval::score_batches(torch::cat(recon), held_out);
    metrics["heldout_psnr"] = score.psnr;
    metrics["heldout_ssim"] = score.ssim;
  }
  ckpt.meta["metrics"] = metrics;
  store_module(ckpt, "ae", *ae);
  return ckpt;
}

TinyAutoencoder load_autoencoder(const Checkpoint& ckpt, double* latent_scale) {
  if (!ckpt.meta.contains("autoencoder")) throw MissingArtifactError("checkpoint holds no autoencoder");
  AutoencoderOptions o;
  o.width = ckpt.meta["autoencoder"]["width"].get<int>();
  o.latent_channels = ckpt.meta["autoencoder"]["latent_channels"].get<int>();
  o.downsampling = ckpt.meta["autoencoder"].value("downsampling", 4);
  TinyAutoencoder ae(o);
  restore_module(ckpt, "ae", *ae);
  if (latent_scale) *latent_scale = ckpt.meta.value("latent_scale", 1.0);
  return ae;
}

Checkpoint pretrain_diffusion(const Checkpoint& ae_ckpt, const LabeledPool& pool, const DiffusionTrainConfig& config,
                              const std::string& fingerprint) {
  if (ae_ckpt.meta.value("kind", "") != "autoencoder")
    throw MissingArtifactError("pretrain_diffusion: an autoencoder checkpoint is required (run pretrain-ae)");
  if (pool.images.size(0) == 0 || static_cast<int64_t>(pool.kinds.size()) != pool.images.size(0))
    throw ValidationError("pretrain_diffusion: empty or inconsistent training pool");
  torch::manual_seed(config.seed);
  DiffusionConfig model = config.model;
  model.autoencoder = load_autoencoder(ae_ckpt)->options();
  LatentDiffusion ld(model);
  ld.autoencoder = load_autoencoder(ae_ckpt, &ld.latent_scale);
  ld.autoencoder->eval();
  for (auto& p : ld.autoencoder->parameters()) p.set_requires_grad(false);

  // Latents are fixed, so encode the pool once.
  torch::Tensor latents;
  {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (int64_t s = 0; s < pool.images.size(0); s += 64) parts.push_back(ld.encode(pool.images.slice(0, s, s + 64)));
    latents = torch::cat(parts);
  }
  const auto kinds = torch::tensor(std::vector<int64_t>(pool.kinds.begin(), pool.kinds.end()), torch::kInt64);

  std::vector<torch::Tensor> params = ld.unet->parameters();
  for (auto& p : ld.tokens->parameters()) params.push_back(p);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(config.lr));
  ld.unet->train();
  if (config.ema_decay < 0.0 || config.ema_decay >= 1.0)
    throw ValidationError("pretrain_diffusion: ema_decay must be in [0, 1)");
  if (config.min_snr_gamma < 0.0) throw ValidationError("pretrain_diffusion: min_snr_gamma must be >= 0");
  std::vector<torch::Tensor> ema;
  for (const auto& p : params) ema.push_back(p.detach().clone());
  std::vector<double> trace;
  const int T = ld.schedule().steps();
  for (int step = 0; step < config.steps; ++step) {
    const auto s = static_cast<std::uint64_t>(step);
    Rng rng(derive_seed(config.seed, {0, s}));
    const auto idx = draw_indices(rng, latents.size(0), config.batch_size);
    const auto z0 = latents.index_select(0, idx);
    auto labels = kinds.index_select(0, idx).clone();
    std::vector<float> coef_a, coef_b, weights;
    std::vector<float> ts;
    for (int b = 0; b < config.batch_size; ++b) {
      const int t = 1 + static_cast<int>(rng.below(T));
      const double ab = ld.schedule().alpha_bar(t);
      ts.push_back(static_cast<float>(t));
      coef_a.push_back(static_cast<float>(std::sqrt(ab)));
      coef_b.push_back(static_cast<float>(std::sqrt(1.0 - ab)));
      const double snr = ab / (1.0 - ab);
      weights.push_back(config.min_snr_gamma > 0.0 ? static_cast<float>(std::min(snr, config.min_snr_gamma) / snr) : 1.0f);
      if (rng.uniform() < config.null_token_prob) labels[b] = ClassTokensImpl::kNull;
    }
    auto gen = at::detail::createCPUGenerator(derive_seed(config.seed, {1, s}));
    const auto eps = torch::randn(z0.sizes(), gen);
    const auto a = torch::tensor(coef_a).view({-1, 1, 1, 1});
    const auto b = torch::tensor(coef_b).view({-1, 1, 1, 1});
    const auto zt = a * z0 + b * eps;
    const auto pred = ld.unet->forward(zt, torch::tensor(ts), ld.tokens->forward(labels));
    const auto loss = config.min_snr_gamma > 0.0
                          ? ((pred - eps).pow(2).mean({1, 2, 3}) * torch::tensor(weights)).mean()
                          : F::mse_loss(pred, eps);
    opt.zero_grad();
    loss.backward();
    opt.step();
    {
      torch::NoGradGuard no_grad;
      for (std::size_t i = 0; i < params.size(); ++i) ema[i].mul_(config.ema_decay).add_(params[i].detach(), 1.0 - config.ema_decay);
    }
    trace.push_back(loss.item<double>());
  }
  {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(ema[i]);
  }

  Checkpoint ckpt;
  ckpt.meta["kind"] = "diffusion";
  ckpt.meta["fingerprint"] = fingerprint;
  ckpt.meta["config"] = ld.config();
  ckpt.meta["autoencoder"] = ae_ckpt.meta["autoencoder"];
  ckpt.meta["latent_scale"] = ld.latent_scale;
  ckpt.meta["autoencoder_hash"] = weights_hash(*ld.autoencoder);
  ckpt.meta["loss_trace"] = trace;
  ckpt.meta["metrics"] = loss_summary(trace);
  store_module(ckpt, "ae", *ld.autoencoder);
  store_module(ckpt, "unet", *ld.unet);
  store_module(ckpt, "tokens", *ld.tokens);
  return ckpt;
}

LatentDiffusion load_diffusion(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "diffusion")
    throw MissingArtifactError("checkpoint is not a diffusion checkpoint (run pretrain-diffusion)");
  LatentDiffusion ld(ckpt.meta.at("config").get<DiffusionConfig>());
  restore_module(ckpt, "ae", *ld.autoencoder);
  restore_module(ckpt, "unet", *ld.unet);
  restore_module(ckpt, "tokens", *ld.tokens);
  ld.latent_scale = ckpt.meta.at("latent_scale").get<double>();
  return ld;
}

KindClassifierImpl::KindClassifierImpl(int64_t classes, int64_t width) {
  namespace nn = torch::nn;
  features_ = register_module(
      "features",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, width, 3).stride(2).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(width, 2 * width, 3).stride(2).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(2 * width, 2 * width, 3).stride(2).padding(1)), nn::ReLU()));
  head_ = register_module("head", nn::Linear(4 * width, classes));
}

torch::Tensor KindClassifierImpl::forward(const torch::Tensor& images) {
  const auto h = features_->forward(images);
  // Mean and max pooling: haze is a global shift, rain and snow are sparse.
  return head_(torch::cat({h.mean({2, 3}), h.amax({2, 3})}, 1));
}

KindClassifier train_kind_classifier(const LabeledPool& pool, int classes, int steps, std::uint64_t seed) {
  torch::manual_seed(seed);
  KindClassifier net(classes);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-3));
  const auto labels = torch::tensor(std::vector<int64_t>(pool.kinds.begin(), pool.kinds.end()), torch::kInt64);
  net->train();
  for (int step = 0; step < steps; ++step) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(step)}));
    const auto idx = draw_indices(rng, pool.images.size(0), 32);
    const auto loss = F::cross_entropy(net->forward(pool.images.index_select(0, idx)), labels.index_select(0, idx));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  net->eval();
  return net;
}

std::vector<int> predict_kinds(KindClassifier& classifier, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  classifier->eval();
  const auto pred = classifier->forward(images).argmax(1);
  std::vector<int> out(pred.size(0));
  for (int64_t i = 0; i < pred.size(0); ++i) out[i] = static_cast<int>(pred[i].item<int64_t>());
  return out;
}

}  // namespace dfir::diffusion
