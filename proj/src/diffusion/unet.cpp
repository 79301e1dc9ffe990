#include "dfir/diffusion/unet.hpp"

#include <cmath>

#include "dfir/core/error.hpp"

namespace dfir::diffusion {

namespace F = torch::nn::functional;

namespace {

torch::nn::GroupNorm group_norm(int64_t channels) {
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min<int64_t>(8, channels), channels));
}

torch::nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

AttentionResult scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  auto weights = torch::softmax(q.matmul(k.transpose(1, 2)) * scale, -1);
  return {weights.matmul(v), weights};
}

CrossAttentionImpl::CrossAttentionImpl(int64_t channels, int64_t context_dim, int64_t inner_dim)
    : context_dim_(context_dim) {
  to_q = register_module("to_q", torch::nn::Linear(torch::nn::LinearOptions(channels, inner_dim).bias(false)));
  to_k = register_module("to_k", torch::nn::Linear(torch::nn::LinearOptions(context_dim, inner_dim).bias(false)));
  to_v = register_module("to_v", torch::nn::Linear(torch::nn::LinearOptions(context_dim, inner_dim).bias(false)));
  to_out = register_module("to_out", torch::nn::Linear(inner_dim, channels));
}

AttentionResult CrossAttentionImpl::attend(const torch::Tensor& x, const torch::Tensor& context) {
  if (context.dim() != 3 || context.size(1) < 1)
    throw ShapeError("cross attention: context must be [B, L, d_p] with L >= 1");
  if (context.size(2) != context_dim_)
    throw ShapeError("cross attention: prompt dim " + std::to_string(context.size(2)) + " != " +
                     std::to_string(context_dim_));
  if (x.dim() != 4 || context.size(0) != x.size(0)) throw ShapeError("cross attention: batch mismatch");
  const auto tokens = x.flatten(2).transpose(1, 2);  // [B, HW, C]
  return scaled_dot_attention(to_q(tokens), to_k(context), to_v(context));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context) {
  const auto out = to_out(attend(x, context).output);  // [B, HW, C]
  return out.transpose(1, 2).reshape(x.sizes());
}

TimeResBlockImpl::TimeResBlockImpl(int64_t in, int64_t out, int64_t time_dim) {
  norm1_ = register_module("norm1", group_norm(in));
  conv1_ = register_module("conv1", conv3(in, out));
  time_ = register_module("time", torch::nn::Linear(time_dim, out));
  norm2_ = register_module("norm2", group_norm(out));
  conv2_ = register_module("conv2", conv3(out, out));
  if (in != out) skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor TimeResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& time_embedding) {
  auto h = conv1_(F::silu(norm1_(x)));
  h = h + time_(F::silu(time_embedding)).unsqueeze(-1).unsqueeze(-1);
  h = conv2_(F::silu(norm2_(h)));
  return h + (skip_ ? skip_(x) : x);
}

AttentionBlockImpl::AttentionBlockImpl(int64_t channels, int64_t context_dim) {
  norm_ = register_module("norm", group_norm(channels));
  attention = register_module("attention", CrossAttention(channels, context_dim, channels));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& context) {
  return x + attention(norm_(x), context);
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  const auto freqs =
      torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
  const auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

CondUNetImpl::CondUNetImpl(CondUNetOptions options) : options_(options) {
  const int64_t c = options.width, c2 = 2 * options.width, td = 4 * options.width;
  if (c < 8 || c % 8 != 0) throw ValidationError("CondUNet: width must be a positive multiple of 8");
  time_mlp_ = register_module(
      "time_mlp", torch::nn::Sequential(torch::nn::Linear(c, td), torch::nn::SiLU(), torch::nn::Linear(td, td)));
  if (options.pooled_context) context_proj_ = register_module("context_proj", torch::nn::Linear(options.context_dim, td));
  in_conv_ = register_module("in_conv", conv3(options.latent_channels, c));
  res_full_ = register_module("res_full", TimeResBlock(c, c, td));
  attn_full = register_module("attn_full", AttentionBlock(c, options.context_dim));
  down_ = register_module("down", conv3(c, c2, 2));
  res_half_ = register_module("res_half", TimeResBlock(c2, c2, td));
  attn_half = register_module("attn_half", AttentionBlock(c2, options.context_dim));
  res_mid_ = register_module("res_mid", TimeResBlock(c2, c2, td));
  up_ = register_module("up", conv3(c2, c));
  res_up_ = register_module("res_up", TimeResBlock(c2, c, td));
  out_norm_ = register_module("out_norm", group_norm(c));
  out_conv_ = register_module("out_conv", conv3(c, options.latent_channels));
}

torch::Tensor CondUNetImpl::forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& context) {
  if (z.dim() != 4 || z.size(1) != options_.latent_channels || z.size(2) % 2 || z.size(3) % 2)
    throw ShapeError("CondUNet: expected [B, latent_channels, even H, even W]");
  auto temb = time_mlp_->forward(timestep_embedding(t, options_.width));
  if (context_proj_) temb = temb + context_proj_(context.mean(1));
  auto h = in_conv_(z);
  h = attn_full(res_full_(h, temb), context);
  const auto skip = h;
  h = down_(h);
  h = attn_half(res_half_(h, temb), context);
  h = res_mid_(h, temb);
  h = up_(F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
  h = res_up_(torch::cat({h, skip}, 1), temb);
  return out_conv_(F::silu(out_norm_(h)));
}

}  // namespace dfir::diffusion
