#pragma once

#include <torch/torch.h>

#include <vector>

#include "dfir/core/image.hpp"

namespace dfir {

// [N, 3, H, W] float32 batch from equally sized images.
torch::Tensor to_tensor(const std::vector<Image>& images);
torch::Tensor to_tensor(const Image& image);  // [1, 3, H, W]

// One image from a [3, H, W] or [1, 3, H, W] tensor (values copied as-is).
Image to_image(const torch::Tensor& chw);
std::vector<Image> to_images(const torch::Tensor& nchw);

}  // namespace dfir
