#pragma once

#include <torch/torch.h>

namespace dfir::nets {

inline torch::nn::Conv2dOptions conv_options(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
  return torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2);
}

inline int64_t conv_param_count(int64_t in, int64_t out, int64_t k) { return in * out * k * k + out; }

// conv-ReLU-conv with identity skip; channel count preserved.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace dfir::nets
