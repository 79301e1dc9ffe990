#include "dfir/nets/restoration.hpp"

#include "dfir/core/error.hpp"

namespace dfir::nets {

namespace F = torch::nn::functional;

ResidualBlockImpl::ResidualBlockImpl(int64_t channels)
    : conv1_(register_module("conv1", torch::nn::Conv2d(conv_options(channels, channels, 3)))),
      conv2_(register_module("conv2", torch::nn::Conv2d(conv_options(channels, channels, 3)))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_(torch::relu(conv1_(x)));
}

RestorationNetImpl::RestorationNetImpl(RestorationNetOptions options) : options_(options) {
  if (options.base_width < 1 || options.depth < 0)
    throw ValidationError("RestorationNet: base_width must be >= 1 and depth >= 0");
  const int64_t w = options.base_width;
  stem_ = register_module("stem", torch::nn::Conv2d(conv_options(3, w, 3)));
  down1_ = register_module("down1", torch::nn::Conv2d(conv_options(w, 2 * w, 3, 2)));
  down2_ = register_module("down2", torch::nn::Conv2d(conv_options(2 * w, 4 * w, 3, 2)));
  blocks_ = register_module("blocks", torch::nn::Sequential());
  for (int i = 0; i < options.depth; ++i) blocks_->push_back(ResidualBlock(4 * w));
  up1_ = register_module(
      "up1", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 4).stride(2).padding(1)));
  up2_ = register_module(
      "up2", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * w, w, 4).stride(2).padding(1)));
  head_ = register_module("head", torch::nn::Conv2d(conv_options(w, 3, 3)));
}

torch::Tensor RestorationNetImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3)
    throw ShapeError("RestorationNet: expected [N, 3, H, W] input");
  if (x.size(2) % kDownsampling != 0 || x.size(3) % kDownsampling != 0)
    throw ShapeError("RestorationNet: H and W must be divisible by " + std::to_string(kDownsampling));
  const auto s0 = torch::relu(stem_(x));
  const auto s1 = torch::relu(down1_(s0));
  auto h = torch::relu(down2_(s1));
  if (!blocks_->is_empty()) h = blocks_->forward(h);
  h = torch::relu(up1_(h)) + s1;
  h = torch::relu(up2_(h)) + s0;
  return x + head_(h);
}

torch::Tensor restore(RestorationNet& net, const torch::Tensor& degraded) {
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(degraded).clamp(0.0, 1.0);
  net->train(was_training);
  return out;
}

int64_t param_count(const torch::nn::Module& net) {
  int64_t n = 0;
  for (const auto& p : net.parameters(true))
    if (p.requires_grad()) n += p.numel();
  return n;
}

std::vector<LayerParams> analytic_param_table(const RestorationNetOptions& o) {
  const int64_t w = o.base_width;
  const auto deconv = [](int64_t in, int64_t out, int64_t k) { return in * out * k * k + out; };
  std::vector<LayerParams> table;
  table.push_back({"stem", conv_param_count(3, w, 3) + conv_param_count(w, 2 * w, 3) +
                               conv_param_count(2 * w, 4 * w, 3)});
  for (int i = 0; i < o.depth; ++i)
    table.push_back({"block" + std::to_string(i), 2 * conv_param_count(4 * w, 4 * w, 3)});
  table.push_back({"head", deconv(4 * w, 2 * w, 4) + deconv(2 * w, w, 4) + conv_param_count(w, 3, 3)});
  return table;
}

int64_t analytic_param_count(const RestorationNetOptions& options) {
  int64_t n = 0;
  for (const auto& l : analytic_param_table(options)) n += l.count;
  return n;
}

}  // namespace dfir::nets
