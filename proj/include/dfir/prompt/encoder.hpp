#pragma once

#include <torch/torch.h>

namespace dfir::prompt {

struct PromptEncoderOptions {
  int width = 32;       // channels of the first residual block
  int embed_dim = 64;   // d_p
  int tokens = 1;       // L_p
};

// Residual block with optional stride and a 1x1 projection on the shortcut when
// the shape changes.
class DownBlockImpl : public torch::nn::Module {
 public:
  DownBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(DownBlock);

// Degradation prompt encoder: three residual blocks, global average pooling and
// a two-layer MLP head. embed() is L2-normalized; tokens() fans the embedding
// out to L_p unit-norm prompt tokens ([B, L_p, d_p]). With L_p = 1 the single
// token is the embedding itself.
class PromptEncoderImpl : public torch::nn::Module {
 public:
  explicit PromptEncoderImpl(PromptEncoderOptions options = {});

  torch::Tensor embed(const torch::Tensor& images);
  torch::Tensor tokens_from_embedding(const torch::Tensor& embedding);
  torch::Tensor forward(const torch::Tensor& images) { return tokens_from_embedding(embed(images)); }

  const PromptEncoderOptions& options() const { return options_; }

 private:
  PromptEncoderOptions options_;
  torch::nn::Sequential blocks_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Linear fanout_{nullptr};
};
TORCH_MODULE(PromptEncoder);

// Evaluation-mode prompt extraction with autograd disabled.
torch::Tensor encode_prompt(PromptEncoder& encoder, const torch::Tensor& images);

// Fresh encoder with the same options and a copy of the weights, parameters
// frozen.
PromptEncoder make_shadow(const PromptEncoder& online);

// shadow <- m * shadow + (1 - m) * online, elementwise over parameters; buffers
// are copied.
void momentum_update(torch::nn::Module& shadow, const torch::nn::Module& online, double momentum);

}  // namespace dfir::prompt
