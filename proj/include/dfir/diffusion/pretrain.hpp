#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "dfir/core/checkpoint.hpp"
#include "dfir/core/image.hpp"
#include "dfir/degrade/spec.hpp"
#include "dfir/diffusion/latent.hpp"

namespace dfir::diffusion {

// Degraded copies of clean images with their kind labels.
struct LabeledPool {
  torch::Tensor images;  // [N, 3, H, W]
  std::vector<int> kinds;
};

// `copies` degraded versions of every clean image, specs drawn from `profile`.
LabeledPool degrade_pool(const std::vector<Image>& clean, const degrade::DomainProfile& profile, int copies,
                         std::uint64_t seed);

struct AutoencoderTrainConfig {
  AutoencoderOptions net;
  int steps = 2000;
  int batch_size = 16;
  double lr = 1e-3;
  double latent_penalty = 1e-4;
  std::uint64_t seed = 0;
};

// L1 + small latent L2 training on `images`; held-out reconstruction PSNR and
// the latent scale (1 / std of training latents) are stored in the metadata.
Checkpoint pretrain_autoencoder(const torch::Tensor& images, const torch::Tensor& held_out,
                                const AutoencoderTrainConfig& config, const std::string& fingerprint);
TinyAutoencoder load_autoencoder(const Checkpoint& ckpt, double* latent_scale = nullptr);

struct DiffusionTrainConfig {
  DiffusionConfig model;
  int steps = 4000;
  int batch_size = 16;
  double lr = 5e-4;
  double null_token_prob = 0.1;
  double ema_decay = 0.999;  // stored weights are this running average; 0 keeps the raw weights
  // Per-sample noise-MSE weight min(snr, g) / snr with snr = ab / (1 - ab);
  // 0 weights every timestep equally.
  double min_snr_gamma = 0.0;
  std::uint64_t seed = 0;
};

// Epsilon-prediction MSE training of the U-Net and class tokens on degraded
// images labeled by kind; the autoencoder comes frozen from `ae_ckpt`.
Checkpoint pretrain_diffusion(const Checkpoint& ae_ckpt, const LabeledPool& pool, const DiffusionTrainConfig& config,
                              const std::string& fingerprint);
LatentDiffusion load_diffusion(const Checkpoint& ckpt);

// Degradation-kind classifier used to check that class-token conditioning
// reaches the samples. Trained on real degraded images only.
class KindClassifierImpl : public torch::nn::Module {
 public:
  explicit KindClassifierImpl(int64_t classes, int64_t width = 16);
  torch::Tensor forward(const torch::Tensor& images);

 private:
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(KindClassifier);

KindClassifier train_kind_classifier(const LabeledPool& pool, int classes, int steps, std::uint64_t seed);
std::vector<int> predict_kinds(KindClassifier& classifier, const torch::Tensor& images);

}  // namespace dfir::diffusion
