#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace dfir {

// H x W x 3 image, interleaved RGB, values nominally in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> pixels() { return data_; }
  std::span<const float> pixels() const { return data_; }

  void clamp01();
  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Round-trips through the 8-bit grid used for storage.
  Image quantized() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// 8-bit RGB PNG. Writing is deterministic: fixed compression settings and no
// timestamp chunks, so equal images produce byte-identical files.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

// Lays images out row-major on a grid with a 2px separator.
Image contact_sheet(const std::vector<std::vector<Image>>& rows, float separator = 1.0f);

}  // namespace dfir
