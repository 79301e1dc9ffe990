#pragma once

#include <torch/torch.h>

namespace dfir::diffusion {

struct AutoencoderOptions {
  int width = 32;
  int latent_channels = 4;
  int downsampling = 4;  // 2 or 4; at 2 the last encoder stage keeps resolution
};

// Three conv stages down to 1/downsampling resolution and a mirrored decoder
// ending in a sigmoid. Images in [0, 1].
class TinyAutoencoderImpl : public torch::nn::Module {
 public:
  explicit TinyAutoencoderImpl(AutoencoderOptions options = {});
  torch::Tensor encode(const torch::Tensor& images);
  torch::Tensor decode(const torch::Tensor& latents);
  torch::Tensor forward(const torch::Tensor& images) { return decode(encode(images)); }
  const AutoencoderOptions& options() const { return options_; }

 private:
  AutoencoderOptions options_;
  torch::nn::Sequential encoder_{nullptr}, decoder_{nullptr};
};
TORCH_MODULE(TinyAutoencoder);

}  // namespace dfir::diffusion
