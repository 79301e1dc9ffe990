#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>

#include "dfir/core/checkpoint.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/prompt/encoder.hpp"
#include "dfir/prompt/queue.hpp"

namespace dfir::prompt {

enum class DenominatorForm {
  kWithPositive,   // InfoNCE as in MoCo: positive and negatives in the denominator
  kNegativesOnly,  // the positive term omitted from the denominator
};

inline constexpr double kDefaultTemperature = 0.07;

// Batch-mean contrastive loss. q, k_pos: [B, d] unit rows; negatives: [K, d]
// unit rows. k_pos and negatives are detached, so gradient reaches q only.
// Throws ValidationError on an empty negative set, tau <= 0 or non-unit rows
// (tolerance NegativeQueue::kNormTolerance), ShapeError on mismatched dims.
torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k_pos, const torch::Tensor& negatives,
                               double tau = kDefaultTemperature,
                               DenominatorForm form = DenominatorForm::kWithPositive);
torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k_pos, const NegativeQueue& queue,
                               double tau = kDefaultTemperature,
                               DenominatorForm form = DenominatorForm::kWithPositive);

// Two crops of side `crop` at independent random positions from each image of
// [B, 3, H, W].
std::pair<torch::Tensor, torch::Tensor> crop_pair(const torch::Tensor& images, int crop, Rng& rng);

struct ContrastiveOptions {
  double temperature = kDefaultTemperature;
  int64_t queue_size = 1024;
  double momentum = 0.999;
  bool momentum_encoder = true;  // false: keys from the online encoder, detached
  int crop = 32;
  DenominatorForm form = DenominatorForm::kWithPositive;
};

// Online encoder, key encoder and negative queue bundled for training. loss()
// builds a graph through the online encoder and stashes the keys; commit()
// then advances the key encoder and enqueues the stashed keys.
class PromptContrast {
 public:
  PromptContrast(PromptEncoder encoder, ContrastiveOptions options, std::uint64_t seed);

  torch::Tensor loss(const torch::Tensor& images, std::uint64_t step_seed);
  void commit();

  PromptEncoder& encoder() { return encoder_; }
  PromptEncoder& key_encoder() { return momentum_ ? momentum_ : encoder_; }
  NegativeQueue& queue() { return queue_; }
  const ContrastiveOptions& options() const { return options_; }

  void store(Checkpoint& ckpt, const std::string& prefix) const;
  void restore(const Checkpoint& ckpt, const std::string& prefix);

 private:
  PromptEncoder encoder_;
  PromptEncoder momentum_{nullptr};
  ContrastiveOptions options_;
  NegativeQueue queue_;
  std::optional<torch::Tensor> pending_keys_;
};

struct ContrastivePretrainOptions {
  int steps = 500;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// Contrastive-only training of the adapter on a pool of degraded images
// [N, 3, H, W]. Returns the per-step loss trace.
std::vector<double> train_contrastive(PromptContrast& contrast, const torch::Tensor& images,
                                      const ContrastivePretrainOptions& options);

}  // namespace dfir::prompt
