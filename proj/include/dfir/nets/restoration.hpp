#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "dfir/nets/layers.hpp"

namespace dfir::nets {

enum class NetRole { kTeacher, kStudent };

struct RestorationNetOptions {
  int base_width = 32;  // teacher default; the student uses half
  int depth = 4;        // residual blocks in the bottleneck

  RestorationNetOptions half() const { return {base_width / 2, depth}; }
  friend bool operator==(const RestorationNetOptions&, const RestorationNetOptions&) = default;
};

// Residual encoder-decoder: two stride-2 stages down, `depth` residual blocks,
// two transposed-conv stages up with additive skips, and a global input skip.
// Spatial size must be divisible by kDownsampling.
class RestorationNetImpl : public torch::nn::Module {
 public:
  static constexpr int kDownsampling = 4;

  explicit RestorationNetImpl(RestorationNetOptions options = {});
  // Unclamped output, for training.
  torch::Tensor forward(const torch::Tensor& x);

  const RestorationNetOptions& options() const { return options_; }

 private:
  RestorationNetOptions options_;
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(RestorationNet);

// Evaluation-mode inference: validates shape, no autograd, output clamped to [0, 1].
torch::Tensor restore(RestorationNet& net, const torch::Tensor& degraded);

int64_t param_count(const torch::nn::Module& net);

struct LayerParams {
  std::string layer;
  int64_t count;
};
// Trainable-scalar count per layer, derived from the layer table without
// instantiating the network. "stem" covers the input conv and both downsampling
// convs; "head" covers both upsampling stages and the output conv.
std::vector<LayerParams> analytic_param_table(const RestorationNetOptions& options);
int64_t analytic_param_count(const RestorationNetOptions& options);

}  // namespace dfir::nets
