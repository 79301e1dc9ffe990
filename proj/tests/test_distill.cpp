#include <cmath>

#include "testing.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/degrade/scene.hpp"
#include "dfir/diffusion/pretrain.hpp"
#include "dfir/distill/losses.hpp"
#include "dfir/distill/trainer.hpp"
#include "dfir/distill/variant.hpp"
#include "dfir/nets/train.hpp"

using namespace dfir;
using namespace dfir::distill;

namespace {

struct Fixture {
  nets::RestorationNet teacher{nullptr};
  diffusion::LatentDiffusion ld;
  DistillData data;

  Fixture() : ld(tiny()) {
    torch::manual_seed(10);
    teacher = nets::RestorationNet(nets::RestorationNetOptions{8, 1});
    std::vector<Image> clean;
    for (std::uint64_t i = 0; i < 8; ++i) clean.push_back(degrade::generate_scene(16, 16, 100 + i));
    auto pool = diffusion::degrade_pool(clean, degrade::builtin_profile("web-mix"), 1, 3);
    data.degraded = pool.images;
    data.degraded_kinds = pool.kinds;
    data.clean = to_tensor(clean);
    data.test_degraded = pool.images.slice(0, 0, 4);
    data.test_clean = data.clean.slice(0, 0, 4);
  }

  static diffusion::DiffusionConfig tiny() {
    diffusion::DiffusionConfig c;
    c.autoencoder = {8, 4};
    c.unet.width = 8;
    c.unet.context_dim = 16;
    c.ddim_steps = 6;
    return c;
  }

  static DistillConfig config() {
    DistillConfig c;
    c.student = {4, 1};
    c.encoder = {4, 16, 1};
    c.contrast.queue_size = 16;
    c.contrast.crop = 8;
    c.joint_epochs = 1;
    c.kd_epochs = 1;
    c.steps_per_epoch = 2;
    c.batch_size = 3;
    c.lr_adapter = 1e-3;
    c.seed = 5;
    return c;
  }

  Checkpoint run(const std::string& variant, const DistillConfig& c, const Checkpoint* resume = nullptr,
                 const LogSink& log = {}) {
    return train_distill(variant_by_name(variant), data, teacher, &ld, c, "fp", resume, log);
  }
};

}  // namespace

TEST_CASE("kd loss closed forms and properties") {
  const auto a = torch::rand({2, 3, 8, 8});
  CHECK(kd_loss(a, a).item<double>() == 0.0);
  CHECK(kd_loss(a, a + 0.1).item<double>() == doctest::Approx(0.01).epsilon(1e-4));
  for (int i = 0; i < 10; ++i) {
    const auto x = torch::randn({3, 3, 4, 5}, torch::kFloat64);
    const auto y = torch::randn({3, 3, 4, 5}, torch::kFloat64);
    CHECK(kd_loss(x, y).item<double>() >= 0.0);
    CHECK(kd_loss(x, y).item<double>() == kd_loss(y, x).item<double>());
  }
  CHECK_THROWS_AS(kd_loss(a, a.slice(0, 0, 1)), ShapeError);

  const auto t = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  auto s = torch::randn({2, 3, 4, 4}, torch::kFloat64).requires_grad_(true);
  kd_loss(t, s).backward();
  const double h = 1e-6;
  for (int64_t i = 0; i < s.numel(); i += 7) {
    auto up = s.detach().clone().view({-1});
    auto dn = s.detach().clone().view({-1});
    up[i] += h;
    dn[i] -= h;
    const double numeric =
        (kd_loss(t, up.view(s.sizes())).item<double>() - kd_loss(t, dn.view(s.sizes())).item<double>()) / (2 * h);
    const double analytic = s.grad().view({-1})[i].item<double>();
    CHECK(std::abs(numeric - analytic) / std::max(1e-12, std::abs(numeric) + std::abs(analytic)) < 1e-3);
  }
}

TEST_CASE("joint loss, gamma schedule and learning-rate halving") {
  const auto kd = torch::tensor(1.0), cl = torch::tensor(2.0);
  CHECK(joint_loss(kd, cl, 0.0).item<double>() == 1.0);
  CHECK(joint_loss(kd, cl, 0.5).item<double>() == 2.0);
  CHECK_THROWS_AS(joint_loss(kd, cl, -0.1), ValidationError);
  CHECK(gamma_at(0, 0.5, 5) == 0.5);
  CHECK(gamma_at(4, 0.5, 5) == 0.5);
  CHECK(gamma_at(5, 0.5, 5) == 0.0);
  CHECK(gamma_at(100, 0.5, 5) == 0.0);
  CHECK(lr_at(1e-3, 14, 15) == 1e-3);
  CHECK(lr_at(1e-3, 15, 15) == 5e-4);
  CHECK(lr_at(1e-3, 30, 15) == 2.5e-4);
  CHECK(lr_at(1e-3, 30, 0) == 1e-3);
}

TEST_CASE("variant matrix") {
  CHECK(ablation_matrix().size() == 7);
  CHECK(variant_by_name("d4ir").z0 == Z0Source::kNoisedWeb);
  CHECK(variant_by_name("d4ir").prompt == PromptSource::kAdapter);
  CHECK(variant_by_name("m0").z0 == Z0Source::kDirect);
  CHECK(variant_by_name("noise-none").extra);
  for (const auto& name : ablation_matrix()) CHECK_FALSE(variant_by_name(name).extra);
  CHECK_THROWS_AS(variant_by_name("m9"), ValidationError);
}

TEST_CASE("smoke distillation keeps frozen weights and logs the gamma schedule") {
  Fixture f;
  const auto teacher_hash = weights_hash(*f.teacher);
  const auto diffusion_hash = f.ld.weights_hash();
  std::vector<nlohmann::json> records;
  const auto ck = f.run("d4ir", Fixture::config(), nullptr, [&](const nlohmann::json& r) { records.push_back(r); });
  CHECK(weights_hash(*f.teacher) == teacher_hash);
  CHECK(f.ld.weights_hash() == diffusion_hash);
  CHECK(ck.meta["frozen_hashes"]["teacher"] == teacher_hash);

  std::vector<double> gammas;
  for (const auto& r : records) {
    if (r.contains("eval")) continue;
    CHECK(std::isfinite(r["loss_kd"].get<double>()));
    CHECK(r.contains("lr"));
    gammas.push_back(r["gamma"].get<double>());
  }
  CHECK(gammas == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  CHECK(ck.meta["cl_trace"][0].get<double>() > 0.0);
  CHECK(ck.meta["cl_trace"][3].get<double>() == 0.0);
  CHECK(ck.meta["metrics"].contains("test_psnr"));
  const auto reloaded = Checkpoint::deserialize(ck.serialize());
  CHECK(nets::param_count(*nets::load_restoration_net(reloaded)) == nets::analytic_param_count({4, 1}));
}

TEST_CASE("every variant runs a step") {
  Fixture f;
  auto c = Fixture::config();
  c.max_steps = 1;
  for (const auto& v : all_variants()) {
    CAPTURE(v.name);
    const auto ck = f.run(v.name, c);
    CHECK(ck.meta["loss_trace"].size() == 1);
    CHECK(std::isfinite(ck.meta["loss_trace"][0].get<double>()));
  }
  CHECK_THROWS_AS(train_distill(variant_by_name("d4ir"), f.data, f.teacher, nullptr, c, "fp"), MissingArtifactError);
}

TEST_CASE("student initialised as the teacher has zero loss at step 0") {
  Fixture f;
  auto c = Fixture::config();
  c.student = {8, 1};
  c.init_from_teacher = true;
  c.max_steps = 1;
  CHECK(f.run("m0", c).meta["loss_trace"][0].get<double>() == 0.0);
  CHECK(f.run("d4ir", c).meta["loss_trace"][0].get<double>() == 0.0);
}

TEST_CASE("dataset objective equals the per-image accumulation") {
  Fixture f;
  torch::manual_seed(1);
  nets::RestorationNet student(nets::RestorationNetOptions{4, 1});
  const double batched = dataset_kd_objective(f.teacher, student, f.data.degraded, 3);
  double acc = 0;
  torch::NoGradGuard ng;
  for (int64_t i = 0; i < f.data.degraded.size(0); ++i) {
    const auto x = f.data.degraded.slice(0, i, i + 1);
    acc += (f.teacher->forward(x) - student->forward(x)).pow(2).mean().item<double>();
  }
  CHECK(batched == doctest::Approx(acc / f.data.degraded.size(0)).epsilon(1e-6));
}

TEST_CASE("identical config and seed give identical traces") {
  Fixture f;
  const auto a = f.run("d4ir", Fixture::config());
  const auto b = f.run("d4ir", Fixture::config());
  CHECK(a.meta["loss_trace"] == b.meta["loss_trace"]);
  CHECK(a.meta["cl_trace"] == b.meta["cl_trace"]);
}

TEST_CASE("split run with resume equals the uninterrupted run") {
  Fixture f;
  for (const std::string variant : {"d4ir", "m3", "m0"}) {
    CAPTURE(variant);
    const auto full = f.run(variant, Fixture::config());
    auto half_cfg = Fixture::config();
    half_cfg.max_steps = 1;
    const auto half = Checkpoint::deserialize(f.run(variant, half_cfg).serialize());
    CHECK_FALSE(half.meta["train_state"]["complete"].get<bool>());
    const auto resumed = f.run(variant, Fixture::config(), &half);
    CHECK(resumed.meta["loss_trace"] == full.meta["loss_trace"]);
    CHECK(resumed.meta["cl_trace"] == full.meta["cl_trace"]);
    CHECK(weights_hash(*nets::load_restoration_net(resumed)) == weights_hash(*nets::load_restoration_net(full)));

    auto zero_cfg = Fixture::config();
    zero_cfg.max_steps = 0;
    const auto zero = f.run(variant, zero_cfg);
    CHECK(f.run(variant, Fixture::config(), &zero).meta["loss_trace"] == full.meta["loss_trace"]);
  }
  auto half_cfg = Fixture::config();
  half_cfg.max_steps = 1;
  const auto half = f.run("d4ir", half_cfg);
  CHECK_THROWS_AS(train_distill(variant_by_name("d4ir"), f.data, f.teacher, &f.ld, Fixture::config(), "other", &half),
                  IntegrityError);
  CHECK_THROWS_AS(f.run("m5", Fixture::config(), &half), IntegrityError);
}
