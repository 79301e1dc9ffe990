#include "dfir/diffusion/autoencoder.hpp"

#include "dfir/core/error.hpp"

namespace dfir::diffusion {

namespace nn = torch::nn;

TinyAutoencoderImpl::TinyAutoencoderImpl(AutoencoderOptions options) : options_(options) {
  const int64_t c = options.width, z = options.latent_channels;
  if (options.downsampling != 2 && options.downsampling != 4)
    throw ValidationError("autoencoder: downsampling must be 2 or 4");
  const bool quarter = options.downsampling == 4;
  auto third_down = quarter ? nn::AnyModule(nn::Conv2d(nn::Conv2dOptions(2 * c, 2 * c, 4).stride(2).padding(1)))
                            : nn::AnyModule(nn::Conv2d(nn::Conv2dOptions(2 * c, 2 * c, 3).padding(1)));
  auto first_up =
      quarter ? nn::AnyModule(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * c, 2 * c, 4).stride(2).padding(1)))
              : nn::AnyModule(nn::Conv2d(nn::Conv2dOptions(2 * c, 2 * c, 3).padding(1)));
  encoder_ = register_module(
      "encoder", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, c, 3).padding(1)), nn::SiLU(),
                                nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)), nn::SiLU(),
                                third_down, nn::SiLU(), nn::Conv2d(nn::Conv2dOptions(2 * c, z, 3).padding(1))));
  decoder_ = register_module(
      "decoder",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(z, 2 * c, 3).padding(1)), nn::SiLU(),
                     first_up, nn::SiLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * c, c, 4).stride(2).padding(1)), nn::SiLU(),
                     nn::Conv2d(nn::Conv2dOptions(c, 3, 3).padding(1)), nn::Sigmoid()));
}

torch::Tensor TinyAutoencoderImpl::encode(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) % options_.downsampling ||
      images.size(3) % options_.downsampling)
    throw ShapeError("autoencoder: expected [B, 3, H, W] with H, W divisible by " +
                     std::to_string(options_.downsampling));
  return encoder_->forward(images);
}

torch::Tensor TinyAutoencoderImpl::decode(const torch::Tensor& latents) {
  if (latents.dim() != 4 || latents.size(1) != options_.latent_channels)
    throw ShapeError("autoencoder: latent channel mismatch");
  return decoder_->forward(latents);
}

}  // namespace dfir::diffusion
