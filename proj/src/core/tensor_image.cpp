#include "dfir/core/tensor_image.hpp"

#include "dfir/core/error.hpp"

namespace dfir {

torch::Tensor to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("to_tensor: empty image list");
  const int h = images.front().height();
  const int w = images.front().width();
  auto out = torch::empty({static_cast<int64_t>(images.size()), 3, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& im = images[n];
    if (im.height() != h || im.width() != w) throw ShapeError("to_tensor: images differ in size");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) acc[n][c][y][x] = im.at(y, x, c);
  }
  return out;
}

torch::Tensor to_tensor(const Image& image) { return to_tensor(std::vector<Image>{image}); }

Image to_image(const torch::Tensor& t) {
  torch::Tensor chw = t.dim() == 4 ? t.squeeze(0) : t;
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("to_image: expected a [3, H, W] tensor");
  chw = chw.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  const int h = static_cast<int>(chw.size(1));
  const int w = static_cast<int>(chw.size(2));
  Image out(h, w);
  auto acc = chw.accessor<float, 3>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = acc[c][y][x];
  return out;
}

std::vector<Image> to_images(const torch::Tensor& nchw) {
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(nchw.size(0)));
  for (int64_t i = 0; i < nchw.size(0); ++i) out.push_back(to_image(nchw[i]));
  return out;
}

}  // namespace dfir
