#include "dfir/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "dfir/core/error.hpp"

namespace dfir {

Image::Image(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * width * kChannels, fill) {
  if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
}

void Image::clamp01() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image Image::quantized() const {
  Image out = *this;
  for (float& v : out.data_) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width));
  auto px = out.pixels();
  for (std::size_t i = 0; i < buffer.size(); ++i) px[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * Image::kChannels);
  auto px = image.pixels();
  for (int y = 0; y < image.height(); ++y) {
    const std::size_t base = static_cast<std::size_t>(y) * row.size();
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(px[base + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image contact_sheet(const std::vector<std::vector<Image>>& rows, float separator) {
  constexpr int kGap = 2;
  int cell_h = 0;
  int cell_w = 0;
  std::size_t cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& im : row) {
      cell_h = std::max(cell_h, im.height());
      cell_w = std::max(cell_w, im.width());
    }
  }
  if (rows.empty() || cols == 0) return {};
  const int n_rows = static_cast<int>(rows.size());
  const int n_cols = static_cast<int>(cols);
  Image sheet(n_rows * cell_h + (n_rows - 1) * kGap, n_cols * cell_w + (n_cols - 1) * kGap,
              separator);
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
      const Image& im = rows[r][c];
      const int oy = r * (cell_h + kGap);
      const int ox = c * (cell_w + kGap);
      for (int y = 0; y < im.height(); ++y)
        for (int x = 0; x < im.width(); ++x)
          for (int ch = 0; ch < Image::kChannels; ++ch) sheet.at(oy + y, ox + x, ch) = im.at(y, x, ch);
    }
  }
  return sheet;
}

}  // namespace dfir
