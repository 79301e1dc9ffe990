#include "dfir/prompt/contrastive.hpp"

#include "dfir/core/error.hpp"

namespace dfir::prompt {

namespace {

void require_unit_rows(const torch::Tensor& x, const char* name) {
  const double dev = (x.detach().norm(2, 1) - 1.0).abs().max().item<double>();
  if (!(dev <= NegativeQueue::kNormTolerance))
    throw ValidationError(std::string("contrastive_loss: ") + name + " rows must be unit-norm");
}

}  // namespace

torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k_pos, const torch::Tensor& negatives,
                               double tau, DenominatorForm form) {
  if (!(tau > 0.0)) throw ValidationError("contrastive_loss: temperature must be positive");
  if (negatives.dim() != 2 || negatives.size(0) == 0)
    throw ValidationError("contrastive_loss: negative set is empty");
  if (q.dim() != 2 || k_pos.sizes() != q.sizes() || negatives.size(1) != q.size(1))
    throw ShapeError("contrastive_loss: q, k_pos must be [B, d] and negatives [K, d]");
  require_unit_rows(q, "q");
  require_unit_rows(k_pos, "k_pos");
  require_unit_rows(negatives, "negatives");

  const auto kp = k_pos.detach().to(q.dtype());
  const auto neg = negatives.detach().to(q.dtype());
  const auto l_pos = (q * kp).sum(1, true) / tau;  // [B, 1]
  const auto l_neg = q.matmul(neg.t()) / tau;      // [B, K]
  const auto denom = form == DenominatorForm::kWithPositive ? torch::cat({l_pos, l_neg}, 1) : l_neg;
  return (torch::logsumexp(denom, 1) - l_pos.squeeze(1)).mean();
}

torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k_pos, const NegativeQueue& queue,
                               double tau, DenominatorForm form) {
  if (queue.empty()) throw ValidationError("contrastive_loss: negative queue is empty");
  return contrastive_loss(q, k_pos, queue.entries(), tau, form);
}

std::pair<torch::Tensor, torch::Tensor> crop_pair(const torch::Tensor& images, int crop, Rng& rng) {
  if (images.dim() != 4) throw ShapeError("crop_pair: expected [B, C, H, W]");
  const int64_t h = images.size(2), w = images.size(3);
  if (crop < 1 || crop > h || crop > w) throw ShapeError("crop_pair: crop larger than image");
  std::vector<torch::Tensor> a, b;
  for (int64_t i = 0; i < images.size(0); ++i) {
    for (auto* out : {&a, &b}) {
      const auto y = static_cast<int64_t>(rng.below(h - crop + 1));
      const auto x = static_cast<int64_t>(rng.below(w - crop + 1));
      out->push_back(images[i].slice(1, y, y + crop).slice(2, x, x + crop));
    }
  }
  return {torch::stack(a), torch::stack(b)};
}

PromptContrast::PromptContrast(PromptEncoder encoder, ContrastiveOptions options, std::uint64_t seed)
    : encoder_(std::move(encoder)), options_(options), queue_(options.queue_size, encoder_->options().embed_dim) {
  if (options_.momentum < 0.0 || options_.momentum > 1.0)
    throw ValidationError("PromptContrast: momentum must be in [0, 1]");
  if (options_.momentum_encoder) {
    momentum_ = make_shadow(encoder_);
  }
  queue_.fill_random(seed);
}

torch::Tensor PromptContrast::loss(const torch::Tensor& images, std::uint64_t step_seed) {
  Rng rng(step_seed);
  auto [query_crops, key_crops] = crop_pair(images, options_.crop, rng);
  const auto q = encoder_->embed(query_crops);
  torch::Tensor k;
  {
    torch::NoGradGuard no_grad;
    k = key_encoder()->embed(key_crops);
  }
  auto l = contrastive_loss(q, k, queue_, options_.temperature, options_.form);
  pending_keys_ = k;
  return l;
}

void PromptContrast::commit() {
  if (momentum_) momentum_update(*momentum_, *encoder_, options_.momentum);
  if (pending_keys_) queue_.enqueue(*pending_keys_);
  pending_keys_.reset();
}

void PromptContrast::store(Checkpoint& ckpt, const std::string& prefix) const {
  store_module(ckpt, prefix + "/online", *encoder_);
  if (momentum_) store_module(ckpt, prefix + "/momentum", *momentum_);
  ckpt.tensors[prefix + "/queue"] = queue_.storage().clone();
  ckpt.tensors[prefix + "/queue_state"] = torch::tensor({queue_.head(), queue_.size()}, torch::kInt64);
}

void PromptContrast::restore(const Checkpoint& ckpt, const std::string& prefix) {
  restore_module(ckpt, prefix + "/online", *encoder_);
  if (momentum_) restore_module(ckpt, prefix + "/momentum", *momentum_);
  const auto state = ckpt.at(prefix + "/queue_state");
  queue_.restore(ckpt.at(prefix + "/queue"), state[0].item<int64_t>(), state[1].item<int64_t>());
  pending_keys_.reset();
}

std::vector<double> train_contrastive(PromptContrast& contrast, const torch::Tensor& images,
                                      const ContrastivePretrainOptions& options) {
  if (images.dim() != 4 || images.size(0) == 0) throw ValidationError("train_contrastive: empty image pool");
  torch::optim::Adam opt(contrast.encoder()->parameters(), torch::optim::AdamOptions(options.lr));
  contrast.encoder()->train();
  std::vector<double> trace;
  trace.reserve(options.steps);
  for (int step = 0; step < options.steps; ++step) {
    const auto s = static_cast<std::uint64_t>(step);
    Rng rng(derive_seed(options.seed, {0, s}));
    std::vector<int64_t> idx(options.batch_size);
    for (auto& i : idx) i = static_cast<int64_t>(rng.below(images.size(0)));
    const auto batch = images.index_select(0, torch::tensor(idx, torch::kInt64));
    auto loss = contrast.loss(batch, derive_seed(options.seed, {1, s}));
    opt.zero_grad();
    loss.backward();
    opt.step();
    contrast.commit();
    trace.push_back(loss.item<double>());
  }
  return trace;
}

}  // namespace dfir::prompt
