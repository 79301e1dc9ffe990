#pragma once

#include <torch/torch.h>

namespace dfir::diffusion {

struct AttentionResult {
  torch::Tensor output;   // [B, N, d]
  torch::Tensor weights;  // [B, N, L], rows sum to 1
};

// softmax(Q K^T / sqrt(d)) V for Q [B, N, d], K and V [B, L, d].
AttentionResult scaled_dot_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

// Spatial features attend to prompt tokens. Queries come from the feature map
// (C -> d, no bias), keys and values from the tokens (d_p -> d).
class CrossAttentionImpl : public torch::nn::Module {
 public:
  CrossAttentionImpl(int64_t channels, int64_t context_dim, int64_t inner_dim);

  // x: [B, C, H, W], context: [B, L, d_p]. Attention before the output
  // projection, positions flattened row-major.
  AttentionResult attend(const torch::Tensor& x, const torch::Tensor& context);
  // Output projection of attend(), reshaped to [B, C, H, W].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context);

  torch::nn::Linear to_q{nullptr}, to_k{nullptr}, to_v{nullptr}, to_out{nullptr};

 private:
  int64_t context_dim_;
};
TORCH_MODULE(CrossAttention);

class TimeResBlockImpl : public torch::nn::Module {
 public:
  TimeResBlockImpl(int64_t in, int64_t out, int64_t time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& time_embedding);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear time_{nullptr};
};
TORCH_MODULE(TimeResBlock);

// Prompt-conditioned attention block: x + CrossAttention(GroupNorm(x), ctx).
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int64_t channels, int64_t context_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context);
  CrossAttention attention{nullptr};

 private:
  torch::nn::GroupNorm norm_{nullptr};
};
TORCH_MODULE(AttentionBlock);

struct CondUNetOptions {
  int latent_channels = 4;
  int width = 32;  // channels at full latent resolution; doubled at the half scale
  int context_dim = 64;
  bool pooled_context = true;  // also add the mean prompt token to the time embedding
};

// Two-scale noise-prediction U-Net with one cross-attention block per scale.
class CondUNetImpl : public torch::nn::Module {
 public:
  explicit CondUNetImpl(CondUNetOptions options = {});
  // z: [B, c, h, w] with even h, w; t: [B] timesteps; context: [B, L, d_p].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& context);
  const CondUNetOptions& options() const { return options_; }

  AttentionBlock attn_full{nullptr}, attn_half{nullptr};

 private:
  CondUNetOptions options_;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Linear context_proj_{nullptr};
  torch::nn::Conv2d in_conv_{nullptr}, down_{nullptr}, up_{nullptr}, out_conv_{nullptr};
  TimeResBlock res_full_{nullptr}, res_half_{nullptr}, res_mid_{nullptr}, res_up_{nullptr};
  torch::nn::GroupNorm out_norm_{nullptr};
};
TORCH_MODULE(CondUNet);

// Sinusoidal embedding of timesteps [B] into [B, dim] (dim even).
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

}  // namespace dfir::diffusion
