#include <cmath>
#include <numeric>

#include "testing.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/degrade/apply.hpp"
#include "dfir/degrade/scene.hpp"
#include "dfir/prompt/contrastive.hpp"
#include "dfir/prompt/encoder.hpp"
#include "dfir/prompt/queue.hpp"
#include "oracles.hpp"

using namespace dfir;
using namespace dfir::prompt;

namespace {

// Unit vectors with q.v = s for every returned v (v = s e0 + sqrt(1-s^2) e_j).
torch::Tensor equal_similarity_set(int count, int dim, double s, int first_axis) {
  auto out = torch::zeros({count, dim}, torch::kFloat64);
  for (int i = 0; i < count; ++i) {
    out[i][0] = s;
    out[i][first_axis + i] = std::sqrt(1 - s * s);
  }
  return out;
}

torch::Tensor e0(int dim) {
  auto q = torch::zeros({1, dim}, torch::kFloat64);
  q[0][0] = 1.0;
  return q;
}

torch::Tensor unit_rows(torch::Tensor x) { return x / x.norm(2, 1, true); }

}  // namespace

TEST_CASE("encoder output shape, normalization and determinism") {
  torch::manual_seed(0);
  PromptEncoder enc(PromptEncoderOptions{});
  const auto x = torch::rand({1, 3, 32, 32});
  const auto a = encode_prompt(enc, x);
  CHECK(a.sizes() == torch::IntArrayRef({1, 1, 64}));
  CHECK(torch::isfinite(a).all().item<bool>());
  CHECK(torch::equal(a, encode_prompt(enc, x)));
  CHECK(a.norm(2, 2).item<double>() == doctest::Approx(1.0).epsilon(1e-5));

  PromptEncoder multi(PromptEncoderOptions{8, 16, 3});
  const auto t = encode_prompt(multi, torch::rand({2, 3, 16, 16}));
  CHECK(t.sizes() == torch::IntArrayRef({2, 3, 16}));
  CHECK(((t.norm(2, 2) - 1).abs().max().item<double>()) < 1e-5);
  CHECK_THROWS_AS(enc->embed(torch::rand({1, 1, 8, 8})), ShapeError);
}

TEST_CASE("uniform similarities give ln(K+1) and ln K") {
  const int K = 8, d = 16;
  for (double s : {0.0, 0.3, -0.5}) {
    const auto q = e0(d);
    const auto kp = equal_similarity_set(1, d, s, 1);
    const auto neg = equal_similarity_set(K, d, s, 2);
    for (double tau : {0.07, 1.0}) {
      const double std_loss = contrastive_loss(q, kp, neg, tau).item<double>();
      const double lit_loss = contrastive_loss(q, kp, neg, tau, DenominatorForm::kNegativesOnly).item<double>();
      CHECK(std_loss == doctest::Approx(std::log(K + 1.0)).epsilon(1e-9));
      CHECK(lit_loss == doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-9));
      CHECK(std_loss == doctest::Approx(oracle::contrastive(q, kp, neg, tau, true)).epsilon(1e-9));
      CHECK(lit_loss == doctest::Approx(oracle::contrastive(q, kp, neg, tau, false)).epsilon(1e-9));
    }
  }
}

TEST_CASE("orthogonal negatives at unit temperature") {
  const int K = 8, d = 12;
  const auto q = e0(d);
  auto neg = torch::zeros({K, d}, torch::kFloat64);
  for (int i = 0; i < K; ++i) neg[i][i + 1] = 1.0;
  const double loss = contrastive_loss(q, q.clone(), neg, 1.0).item<double>();
  CHECK(loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 8.0))).epsilon(1e-12));
  CHECK(loss == doctest::Approx(1.37195).epsilon(1e-5));
}

TEST_CASE("random batches match the brute-force softmax") {
  torch::manual_seed(2);
  const auto q = unit_rows(torch::randn({5, 10}, torch::kFloat64));
  const auto kp = unit_rows(torch::randn({5, 10}, torch::kFloat64));
  const auto neg = unit_rows(torch::randn({20, 10}, torch::kFloat64));
  for (double tau : {0.07, 0.5}) {
    CHECK(contrastive_loss(q, kp, neg, tau).item<double>() ==
          doctest::Approx(oracle::contrastive(q, kp, neg, tau, true)).epsilon(1e-9));
    CHECK(contrastive_loss(q, kp, neg, tau, DenominatorForm::kNegativesOnly).item<double>() ==
          doctest::Approx(oracle::contrastive(q, kp, neg, tau, false)).epsilon(1e-9));
  }
  CHECK(contrastive_loss(q, kp, neg).item<double>() >= 0.0);
}

TEST_CASE("contrastive loss rejects bad inputs") {
  const auto q = e0(4);
  NegativeQueue empty(4, 4);
  CHECK_THROWS_AS(contrastive_loss(q, q, empty), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(q, q, torch::zeros({0, 4}, torch::kFloat64)), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(q, q, q, 0.0), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(q, q, q, -1.0), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(q * 2, q, q), ValidationError);
  CHECK_THROWS_AS(contrastive_loss(q, q * 1.01, q), ValidationError);
  CHECK_NOTHROW(contrastive_loss(q * (1 + 5e-4), q, q));
  CHECK_THROWS_AS(contrastive_loss(q, q, e0(5)), ShapeError);
}

TEST_CASE("gradient reaches q only and matches finite differences") {
  torch::manual_seed(3);
  auto q = unit_rows(torch::randn({3, 6}, torch::kFloat64)).requires_grad_(true);
  auto kp = unit_rows(torch::randn({3, 6}, torch::kFloat64)).requires_grad_(true);
  auto neg = unit_rows(torch::randn({7, 6}, torch::kFloat64)).requires_grad_(true);
  const double tau = 0.5;
  contrastive_loss(q, kp, neg, tau).backward();
  CHECK_FALSE(kp.grad().defined());
  CHECK_FALSE(neg.grad().defined());
  REQUIRE(q.grad().defined());

  // The loss is a smooth function of raw q; perturb off the unit sphere by
  // far less than the norm tolerance.
  const double h = 1e-7;
  const auto base = q.detach().clone();
  for (int64_t b = 0; b < 3; ++b)
    for (int64_t j = 0; j < 6; ++j) {
      auto up = base.clone(), dn = base.clone();
      up[b][j] += h;
      dn[b][j] -= h;
      const double numeric = (contrastive_loss(up, kp, neg, tau).item<double>() -
                              contrastive_loss(dn, kp, neg, tau).item<double>()) / (2 * h);
      const double analytic = q.grad()[b][j].item<double>();
      CHECK(std::abs(numeric - analytic) / std::max(1e-8, std::abs(numeric) + std::abs(analytic)) < 1e-3);
    }
}

TEST_CASE("queue is FIFO with bounded size") {
  NegativeQueue queue(4, 3);
  auto keys = torch::zeros({6, 3});
  for (int i = 0; i < 6; ++i) keys[i][i % 3] = (i < 3) ? 1.0f : -1.0f;
  queue.enqueue(keys.slice(0, 0, 2));
  CHECK(queue.size() == 2);
  CHECK(torch::equal(queue.entries(), keys.slice(0, 0, 2)));
  queue.enqueue(keys.slice(0, 2, 6));
  CHECK(queue.size() == 4);
  CHECK(torch::equal(queue.entries(), keys.slice(0, 2, 6)));
  queue.enqueue(torch::zeros({0, 3}));
  CHECK(torch::equal(queue.entries(), keys.slice(0, 2, 6)));
  CHECK_THROWS_AS(queue.enqueue(torch::ones({1, 4}) / 2), ShapeError);
  CHECK_THROWS_AS(queue.enqueue(torch::ones({1, 3})), ValidationError);
}

TEST_CASE("scripted interleaving always reads a consistent suffix of the insert log") {
  NegativeQueue queue(5, 4);
  Rng rng(9);
  std::vector<torch::Tensor> log;
  for (int round = 0; round < 40; ++round) {
    const int n = static_cast<int>(rng.below(4));
    auto batch = unit_rows(torch::randn({n, 4}) + 0.1);
    if (n > 0) {
      queue.enqueue(batch);
      for (int i = 0; i < n; ++i) log.push_back(batch[i]);
    }
    const auto snapshot = queue.entries();
    const auto expect_n = std::min<int64_t>(5, static_cast<int64_t>(log.size()));
    REQUIRE(snapshot.size(0) == expect_n);
    for (int64_t i = 0; i < expect_n; ++i)
      CHECK(torch::allclose(snapshot[i], log[log.size() - expect_n + i], 1e-6, 1e-6));
    CHECK(((snapshot.norm(2, 1) - 1).abs().max().item<double>()) <= 1e-5 + (expect_n == 0));
  }
}

TEST_CASE("random fill produces unit keys") {
  NegativeQueue queue(64, 16);
  queue.fill_random(4);
  CHECK(queue.size() == 64);
  CHECK(((queue.entries().norm(2, 1) - 1).abs().max().item<double>()) < 1e-5);
}

TEST_CASE("momentum update is the elementwise convex combination") {
  torch::manual_seed(5);
  PromptEncoder online(PromptEncoderOptions{4, 8, 1});
  auto shadow = make_shadow(online);
  {
    torch::NoGradGuard ng;
    for (auto& p : online->parameters()) p.add_(torch::randn_like(p));
  }
  std::vector<torch::Tensor> before;
  for (auto& p : shadow->parameters()) before.push_back(p.detach().clone());
  momentum_update(*shadow, *online, 0.9);
  auto sp = shadow->parameters();
  auto op = online->parameters();
  for (std::size_t i = 0; i < sp.size(); ++i)
    CHECK(torch::allclose(sp[i], 0.9 * before[i] + 0.1 * op[i], 1e-6, 1e-7));
}

TEST_CASE("contrastive state round-trips through a checkpoint") {
  torch::manual_seed(6);
  ContrastiveOptions o;
  o.queue_size = 8;
  o.crop = 8;
  PromptContrast a(PromptEncoder(PromptEncoderOptions{4, 8, 1}), o, 1);
  auto loss = a.loss(torch::rand({3, 3, 16, 16}), 2);
  a.commit();
  Checkpoint ck;
  a.store(ck, "dpa");
  PromptContrast b(PromptEncoder(PromptEncoderOptions{4, 8, 1}), o, 99);
  b.restore(ck, "dpa");
  CHECK(weights_hash(*a.encoder()) == weights_hash(*b.encoder()));
  CHECK(weights_hash(*a.key_encoder()) == weights_hash(*b.key_encoder()));
  CHECK(torch::equal(a.queue().entries(), b.queue().entries()));
}

TEST_CASE("contrastive training separates two degradation kinds") {
  torch::manual_seed(7);
  auto make_pool = [](std::uint64_t seed, int n) {
    std::vector<Image> images;
    std::vector<int> kinds;
    for (int i = 0; i < n; ++i) {
      const Image clean = degrade::generate_scene(32, 32, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
      degrade::DegradationSpec spec;
      if (i % 2 == 0) {
        spec.kind = degrade::Kind::kRain;
        spec.rain = {10.0, 9.0, 12.0, 0.8};
      } else {
        spec.kind = degrade::Kind::kHaze;
        spec.haze.transmission = 0.5;
        spec.haze.airlight = {0.85, 0.85, 0.85};
      }
      images.push_back(degrade::apply_degradation(clean, spec, seed + i));
      kinds.push_back(i % 2);
    }
    return std::pair{to_tensor(images), kinds};
  };
  const auto [train, train_kinds] = make_pool(100, 64);
  const auto [held, held_kinds] = make_pool(200, 24);

  ContrastiveOptions o;
  o.queue_size = 128;
  o.crop = 16;
  o.momentum = 0.99;
  PromptContrast contrast(PromptEncoder(PromptEncoderOptions{16, 32, 1}), o, 3);
  const auto trace = train_contrastive(contrast, train, {500, 16, 1e-3, 11});
  REQUIRE(trace.size() == 500);
  const double lead = std::accumulate(trace.begin(), trace.begin() + 100, 0.0) / 100;
  const double tail = std::accumulate(trace.end() - 100, trace.end(), 0.0) / 100;
  MESSAGE("contrastive loss leading " << lead << " trailing " << tail);
  CHECK(tail < lead);

  Rng rng(13);
  auto [ca, cb] = crop_pair(held, 16, rng);
  torch::NoGradGuard ng;
  contrast.encoder()->eval();
  const auto ea = contrast.encoder()->embed(ca);
  const auto eb = contrast.encoder()->embed(cb);
  const double same = (ea * eb).sum(1).mean().item<double>();
  double cross = 0;
  int pairs = 0;
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 24; ++j)
      if (held_kinds[i] != held_kinds[j]) {
        cross += (ea[i] * eb[j]).sum().item<double>();
        ++pairs;
      }
  cross /= pairs;
  MESSAGE("same-image similarity " << same << " cross-kind " << cross);
  CHECK(same - cross >= 0.1);
}
