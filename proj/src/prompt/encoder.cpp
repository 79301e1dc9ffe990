#include "dfir/prompt/encoder.hpp"

#include "dfir/core/error.hpp"

namespace dfir::prompt {

namespace F = torch::nn::functional;

DownBlockImpl::DownBlockImpl(int64_t in, int64_t out, int64_t stride) {
  conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1)));
  if (in != out || stride != 1)
    shortcut_ = register_module("shortcut", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride)));
}

torch::Tensor DownBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv2_(F::leaky_relu(conv1_(x), F::LeakyReLUFuncOptions().negative_slope(0.1)));
  auto skip = shortcut_ ? shortcut_(x) : x;
  return F::leaky_relu(h + skip, F::LeakyReLUFuncOptions().negative_slope(0.1));
}

PromptEncoderImpl::PromptEncoderImpl(PromptEncoderOptions options) : options_(options) {
  if (options_.width < 1 || options_.embed_dim < 1 || options_.tokens < 1)
    throw ValidationError("PromptEncoder: width, embed_dim and tokens must be positive");
  const int64_t w = options_.width;
  blocks_ = register_module("blocks", torch::nn::Sequential(DownBlock(3, w, 1), DownBlock(w, 2 * w, 2),
                                                            DownBlock(2 * w, 4 * w, 2)));
  fc1_ = register_module("fc1", torch::nn::Linear(4 * w, 4 * w));
  fc2_ = register_module("fc2", torch::nn::Linear(4 * w, options_.embed_dim));
  if (options_.tokens > 1)
    fanout_ = register_module("fanout", torch::nn::Linear(options_.embed_dim, options_.tokens * options_.embed_dim));
}

torch::Tensor PromptEncoderImpl::embed(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("PromptEncoder: expected [B, 3, H, W]");
  auto h = blocks_->forward(images);
  h = h.mean({2, 3});
  h = fc2_(F::leaky_relu(fc1_(h), F::LeakyReLUFuncOptions().negative_slope(0.1)));
  return F::normalize(h, F::NormalizeFuncOptions().dim(1));
}

torch::Tensor PromptEncoderImpl::tokens_from_embedding(const torch::Tensor& embedding) {
  if (!fanout_) return embedding.unsqueeze(1);
  auto t = fanout_(embedding).view({embedding.size(0), options_.tokens, options_.embed_dim});
  return F::normalize(t, F::NormalizeFuncOptions().dim(2));
}

torch::Tensor encode_prompt(PromptEncoder& encoder, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  const bool was_training = encoder->is_training();
  encoder->eval();
  auto out = encoder->forward(images);
  encoder->train(was_training);
  return out;
}

PromptEncoder make_shadow(const PromptEncoder& online) {
  PromptEncoder shadow(online->options());
  torch::NoGradGuard no_grad;
  auto dst = shadow->parameters();
  auto src = online->parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i].copy_(src[i]);
    dst[i].set_requires_grad(false);
  }
  return shadow;
}

void momentum_update(torch::nn::Module& shadow, const torch::nn::Module& online, double momentum) {
  torch::NoGradGuard no_grad;
  auto sp = shadow.parameters(true);
  auto op = online.parameters(true);
  if (sp.size() != op.size()) throw ShapeError("momentum_update: parameter lists differ");
  for (std::size_t i = 0; i < sp.size(); ++i) sp[i].mul_(momentum).add_(op[i].detach(), 1.0 - momentum);
  auto sb = shadow.buffers(true);
  auto ob = online.buffers(true);
  for (std::size_t i = 0; i < sb.size() && i < ob.size(); ++i) sb[i].copy_(ob[i]);
}

}  // namespace dfir::prompt
