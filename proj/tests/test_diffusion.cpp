#include <cmath>

#include "testing.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/image.hpp"
#include "dfir/degrade/scene.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/diffusion/latent.hpp"
#include "dfir/diffusion/pretrain.hpp"
#include "dfir/diffusion/sampler.hpp"
#include "dfir/diffusion/schedule.hpp"
#include "dfir/diffusion/unet.hpp"
#include "oracles.hpp"

using namespace dfir;
using namespace dfir::diffusion;

namespace {

DiffusionConfig tiny_config() {
  DiffusionConfig c;
  c.autoencoder = {8, 4};
  c.unet.width = 8;
  c.unet.context_dim = 16;
  c.ddim_steps = 10;
  return c;
}

}  // namespace

TEST_CASE("schedule invariants") {
  const auto s = NoiseSchedule::linear();
  CHECK(s.steps() == 1000);
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(1000) < 1e-2);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  CHECK_THROWS_AS(s.alpha_bar(1001), ValidationError);
  CHECK_THROWS_AS(s.alpha_bar(-1), ValidationError);

  const auto sub = s.subsequence(70);
  REQUIRE(sub.size() == 70);
  CHECK(sub.front() >= 1);
  CHECK(sub.back() == 1000);
  for (std::size_t i = 1; i < sub.size(); ++i) CHECK(sub[i] > sub[i - 1]);

  const auto half = s.denoise_path(sub, 0.5);
  CHECK(half.front() == 500);
  CHECK(half.size() == 36);
  CHECK(half.back() == 0);
  CHECK(s.denoise_path(sub, 0.0).empty());
  CHECK(s.denoise_path(sub, 1.0).front() == 1000);
  CHECK_THROWS_AS(s.denoise_path(sub, 1.3), ValidationError);
}

TEST_CASE("forward diffusion closed form") {
  torch::manual_seed(0);
  const auto s = NoiseSchedule::linear();
  const auto z0 = torch::randn({2, 4, 8, 8}, torch::kFloat64);
  const auto eps = torch::randn({2, 4, 8, 8}, torch::kFloat64);
  CHECK(torch::equal(forward_diffuse(z0, eps, s, 0), z0));
  CHECK(torch::equal(forward_diffuse(z0, eps, 0.0), eps));
  const int t = 400;
  const double ab = s.alpha_bar(t);
  CHECK(torch::allclose(forward_diffuse(z0, eps, s, t), std::sqrt(ab) * z0 + std::sqrt(1 - ab) * eps, 0, 1e-15));
  CHECK_THROWS_AS(forward_diffuse(z0, eps, s, 1001), ValidationError);
  CHECK_THROWS_AS(forward_diffuse(z0, eps.slice(0, 0, 1), 0.5), ShapeError);

  auto gen = at::detail::createCPUGenerator(42);
  const auto draws = torch::randn({100000}, gen, torch::kFloat64);
  const auto zt = forward_diffuse(torch::zeros({100000}, torch::kFloat64), draws, 0.25);
  CHECK(zt.var().item<double>() == doctest::Approx(0.75).epsilon(0.01 / 0.75));
}

TEST_CASE("ddim step with the true noise lands on the forward-diffused latent for every pair") {
  torch::manual_seed(1);
  const auto s = NoiseSchedule::linear();
  auto sub = s.subsequence(70);
  sub.insert(sub.begin(), 0);
  const auto z0 = torch::randn({1, 4, 4, 4}, torch::kFloat64);
  const auto eps = torch::randn({1, 4, 4, 4}, torch::kFloat64);
  double worst = 0;
  for (std::size_t i = 1; i < sub.size(); ++i) {
    const auto zt = forward_diffuse(z0, eps, s, sub[i]);
    for (std::size_t j = 0; j < i; ++j) {
      const auto prev = ddim_step(zt, eps, s, sub[i], sub[j]);
      worst = std::max(worst, (prev - forward_diffuse(z0, eps, s, sub[j])).abs().max().item<double>());
    }
  }
  CHECK(worst < 1e-5);
  const auto top = forward_diffuse(z0, eps, s, 1000);
  CHECK((ddim_step(top, eps, s, 1000, 0) - z0).abs().max().item<double>() < 1e-5);
  CHECK_THROWS_AS(ddim_step(z0, eps, s, 10, 10), ValidationError);
  CHECK_THROWS_AS(ddim_step(z0, eps, s, 10, 20), ValidationError);
}

TEST_CASE("ddim zero-noise closed form and telescoping") {
  torch::manual_seed(2);
  const auto s = NoiseSchedule::linear();
  const auto z = torch::randn({3, 4, 4, 4}, torch::kFloat64);
  const auto zero = torch::zeros_like(z);
  const auto out = ddim_step(z, zero, s, 700, 300);
  CHECK(torch::allclose(out, std::sqrt(s.alpha_bar(300) / s.alpha_bar(700)) * z, 0, 1e-12));

  const auto c = torch::randn_like(z);
  const auto two = ddim_step(ddim_step(z, c, s, 900, 450), c, s, 450, 120);
  const auto one = ddim_step(z, c, s, 900, 120);
  CHECK((two - one).abs().max().item<double>() < 1e-5);

  // The printed alternative keeps the t-level noise weight and misses z0.
  const auto z0 = torch::randn_like(z);
  const auto zt = forward_diffuse(z0, c, s, 500);
  CHECK((ddim_step(zt, c, s, 500, 0, DdimForm::kLiteral) - z0).abs().max().item<double>() > 0.1);
}

TEST_CASE("sampler walks the path and honours gradient truncation") {
  const auto s = NoiseSchedule::linear();
  const auto path = s.denoise_path(s.subsequence(10), 0.5);
  REQUIRE(path.size() == 6);
  auto w = torch::full({1}, 0.1, torch::requires_grad());
  int calls = 0;
  auto predict = [&](const torch::Tensor& z, int) {
    ++calls;
    return z * w;
  };
  const auto z = torch::ones({1, 4, 2, 2});
  ddim_sample(z, path, s, predict).sum().backward();
  CHECK(calls == 5);
  const auto full = w.grad().clone();
  w.grad().zero_();
  ddim_sample(z, path, s, predict, {DdimForm::kStandard, 1}).sum().backward();
  CHECK(w.grad().abs().item<double>() > 0);
  CHECK(w.grad().item<double>() != doctest::Approx(full.item<double>()));
}

TEST_CASE("cross attention matches the dense oracle and has stochastic rows") {
  torch::manual_seed(3);
  const auto q = torch::randn({2, 7, 5}, torch::kFloat64);
  const auto k = torch::randn({2, 3, 5}, torch::kFloat64);
  const auto v = torch::randn({2, 3, 6}, torch::kFloat64);
  const auto r = scaled_dot_attention(q, k, v);
  CHECK((r.output - oracle::attention(q, k, v)).abs().max().item<double>() < 1e-5);
  CHECK((r.weights.sum(-1) - 1).abs().max().item<double>() < 1e-5);

  CrossAttention attn(8, 16, 12);
  const auto x = torch::randn({2, 8, 4, 4});
  const auto ctx = torch::randn({2, 3, 16});
  const auto a = attn->attend(x, ctx);
  CHECK((a.weights.sum(-1) - 1).abs().max().item<double>() < 1e-5);
  CHECK(attn->forward(x, ctx).sizes() == x.sizes());
  CHECK_THROWS_AS(attn->attend(x, torch::randn({2, 3, 15})), ShapeError);
  CHECK_THROWS_AS(attn->attend(x, torch::randn({2, 0, 16})), ShapeError);

  const auto one = ctx.slice(1, 0, 1);
  const auto single = attn->attend(x, one);
  const auto value = attn->to_v(one);  // [2, 1, 12]
  CHECK((single.output - value.expand_as(single.output)).abs().max().item<double>() < 1e-6);
  const auto twice = attn->attend(x, torch::cat({one, one}, 1));
  CHECK((twice.output - single.output).abs().max().item<double>() < 1e-6);
  CHECK((twice.weights - 0.5).abs().max().item<double>() < 1e-6);
}

TEST_CASE("unet and autoencoder shapes, prompt gradient") {
  torch::manual_seed(4);
  CondUNet unet(CondUNetOptions{4, 8, 16});
  const auto z = torch::randn({2, 4, 8, 8});
  auto prompt = torch::randn({2, 1, 16}, torch::requires_grad());
  const auto out = unet->forward(z, torch::tensor({10.0f, 500.0f}), prompt);
  CHECK(out.sizes() == z.sizes());
  out.sum().backward();
  CHECK(prompt.grad().abs().sum().item<double>() > 0);
  CHECK_THROWS_AS(unet->forward(torch::randn({1, 4, 7, 8}), torch::tensor({1.0f}), prompt.slice(0, 0, 1)), ShapeError);

  TinyAutoencoder ae(AutoencoderOptions{8, 4});
  const auto x = torch::rand({2, 3, 32, 32});
  CHECK(ae->encode(x).sizes() == torch::IntArrayRef({2, 4, 8, 8}));
  const auto y = ae->forward(x);
  CHECK(y.sizes() == x.sizes());
  CHECK(y.min().item<float>() >= 0.0f);
  CHECK(y.max().item<float>() <= 1.0f);
  CHECK_THROWS_AS(ae->encode(torch::rand({1, 3, 30, 32})), ShapeError);
}

TEST_CASE("generate: degenerate lambda, bounds and prompt gradient") {
  torch::manual_seed(5);
  LatentDiffusion ld(tiny_config());
  ld.freeze();
  const auto clean = torch::rand({2, 3, 16, 16});
  const auto prompt = ld.tokens->forward(torch::tensor({0, 1}, torch::kInt64)).detach();
  {
    torch::NoGradGuard ng;
    CHECK(torch::allclose(ld.generate(clean, prompt, 0.0), ld.decode(ld.encode(clean)).clamp(0, 1)));
  }
  CHECK_THROWS_AS(ld.generate(clean, prompt, 1.3), ValidationError);
  CHECK_THROWS_AS(ld.generate(clean, prompt, -0.1), ValidationError);

  auto p = prompt.clone().requires_grad_(true);
  const auto x = ld.generate(clean, p, 0.5, {{DdimForm::kStandard, -1}, 3});
  CHECK(x.sizes() == clean.sizes());
  CHECK(x.min().item<float>() >= 0.0f);
  CHECK(x.max().item<float>() <= 1.0f);
  x.mean().backward();
  CHECK(p.grad().abs().sum().item<double>() > 0);

  torch::NoGradGuard ng;
  const auto a = ld.generate(clean, prompt, 0.5, {{}, 9});
  const auto b = ld.generate(clean, prompt, 0.5, {{}, 9});
  CHECK(torch::equal(a, b));
  const auto samples = ld.sample(prompt, 4, 4, {{}, 1});
  CHECK(samples.sizes() == torch::IntArrayRef({2, 3, 16, 16}));
}

TEST_CASE("pretraining smoke, checkpoint round trip and missing autoencoder") {
  std::vector<Image> clean;
  for (std::uint64_t i = 0; i < 6; ++i) clean.push_back(degrade::generate_scene(16, 16, i));
  const auto pool = degrade_pool(clean, degrade::builtin_profile("broad"), 2, 7);
  CHECK(pool.images.size(0) == 12);
  CHECK(pool.kinds.size() == 12);

  AutoencoderTrainConfig ac;
  ac.net = {8, 4};
  ac.steps = 1;
  ac.batch_size = 4;
  const auto ae_ckpt = pretrain_autoencoder(pool.images, to_tensor(clean), ac, "fp");
  CHECK(std::isfinite(ae_ckpt.meta["loss_trace"][0].get<double>()));
  CHECK(ae_ckpt.meta["metrics"].contains("heldout_psnr"));

  DiffusionTrainConfig dc;
  dc.model = tiny_config();
  dc.steps = 1;
  dc.batch_size = 4;
  const auto d_ckpt = pretrain_diffusion(Checkpoint::deserialize(ae_ckpt.serialize()), pool, dc, "fp");
  CHECK(std::isfinite(d_ckpt.meta["loss_trace"][0].get<double>()));
  CHECK(d_ckpt.fingerprint() == "fp");
  auto ld = load_diffusion(Checkpoint::deserialize(d_ckpt.serialize()));
  CHECK(weights_hash(*ld.autoencoder) == d_ckpt.meta["autoencoder_hash"].get<std::string>());
  CHECK(ld.config().ddim_steps == 10);

  // Per-sample timestep weighting still yields a finite loss; a negative cap is rejected.
  dc.min_snr_gamma = 5.0;
  const auto w_ckpt = pretrain_diffusion(Checkpoint::deserialize(ae_ckpt.serialize()), pool, dc, "fp");
  CHECK(std::isfinite(w_ckpt.meta["loss_trace"][0].get<double>()));
  dc.min_snr_gamma = -1.0;
  CHECK_THROWS_AS(pretrain_diffusion(Checkpoint::deserialize(ae_ckpt.serialize()), pool, dc, "fp"), ValidationError);
  dc.min_snr_gamma = 0.0;

  CHECK_THROWS_AS(pretrain_diffusion(Checkpoint{}, pool, dc, "fp"), MissingArtifactError);
  CHECK_THROWS_AS(load_diffusion(ae_ckpt), MissingArtifactError);
}
