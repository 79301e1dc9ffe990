#include "dfir/nets/train.hpp"

#include <cmath>
#include <numeric>

#include "dfir/core/dataset.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/eval/evaluate.hpp"

namespace dfir::nets {

std::pair<double, double> decile_means(const std::vector<double>& trace) {
  if (trace.empty()) return {0.0, 0.0};
  const std::size_t n = std::max<std::size_t>(1, trace.size() / 10);
  const double first = std::accumulate(trace.begin(), trace.begin() + n, 0.0) / n;
  const double last = std::accumulate(trace.end() - n, trace.end(), 0.0) / n;
  return {first, last};
}

std::vector<double> train_restoration_l1(RestorationNet& net, const torch::Tensor& degraded,
                                         const torch::Tensor& clean,
                                         const RestorationTrainOptions& options) {
  if (degraded.sizes() != clean.sizes()) throw ShapeError("train_restoration_l1: pair shapes differ");
  const int64_t n = degraded.size(0);
  if (n == 0) throw ValidationError("train_restoration_l1: empty training set");
  torch::optim::Adam optim(net->parameters(),
                           torch::optim::AdamOptions(options.lr).betas({options.beta1, options.beta2}));
  net->train();
  std::vector<double> trace;
  trace.reserve(options.steps);
  for (int step = 0; step < options.steps; ++step) {
    Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(step)}));
    std::vector<int64_t> idx(std::min<int64_t>(options.batch_size, n));
    for (auto& i : idx) i = static_cast<int64_t>(rng.below(n));
    auto x = gather_rows(degraded, idx);
    auto y = gather_rows(clean, idx);
    if (options.flips && rng.uniform() < 0.5) {
      x = x.flip({3});
      y = y.flip({3});
    }
    optim.zero_grad();
    auto loss = torch::l1_loss(net->forward(x), y);
    loss.backward();
    optim.step();
    trace.push_back(loss.item<double>());
  }
  return trace;
}

void store_restoration_net(Checkpoint& ckpt, const RestorationNet& net, const std::string& prefix) {
  ckpt.meta[prefix] = {{"base_width", net->options().base_width}, {"depth", net->options().depth}};
  store_module(ckpt, prefix, *net);
}

RestorationNet load_restoration_net(const Checkpoint& ckpt, const std::string& prefix) {
  if (!ckpt.meta.contains(prefix)) throw IntegrityError("checkpoint has no '" + prefix + "' network");
  RestorationNetOptions o;
  o.base_width = ckpt.meta[prefix].at("base_width").get<int>();
  o.depth = ckpt.meta[prefix].at("depth").get<int>();
  RestorationNet net(o);
  restore_module(ckpt, prefix, *net);
  return net;
}

Checkpoint pretrain_teacher(const degrade::DatasetManifest& manifest, const TeacherConfig& config,
                            const std::string& fingerprint) {
  if (!manifest.paired()) throw ValidationError("pretrain_teacher: manifest is not paired");
  const auto train = load_pairs(manifest, degrade::Split::kTrain);

  torch::manual_seed(static_cast<uint64_t>(derive_seed(config.train.seed, {0xbeef})));
  RestorationNet net(config.net);
  const auto trace = train_restoration_l1(net, train.degraded, train.clean, config.train);

  Checkpoint ckpt;
  ckpt.meta["kind"] = "teacher";
  ckpt.meta["fingerprint"] = fingerprint;
  ckpt.meta["step"] = config.train.steps;
  ckpt.meta["loss_trace"] = trace;
  const auto [first, last] = decile_means(trace);
  nlohmann::json metrics = {{"loss_first_decile", first}, {"loss_last_decile", last}};
  if (!manifest.select(degrade::Role::kDegraded, degrade::Split::kTest).empty()) {
    const auto test = load_pairs(manifest, degrade::Split::kTest);
    const auto restored = eval::evaluate_restoration(net, test.degraded, test.clean);
    const auto input = eval::score_batches(test.degraded, test.clean);
    metrics["test_psnr"] = restored.psnr;
    metrics["test_ssim"] = restored.ssim;
    metrics["input_psnr"] = input.psnr;
    metrics["input_ssim"] = input.ssim;
  }
  ckpt.meta["metrics"] = metrics;
  ckpt.meta["params"] = param_count(*net);
  store_restoration_net(ckpt, net);
  return ckpt;
}

}  // namespace dfir::nets
