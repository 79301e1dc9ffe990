#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "dfir/core/image.hpp"
#include "dfir/core/rng.hpp"

namespace dfir::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dfir_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image im(h, w);
  for (float& v : im.pixels()) v = static_cast<float>(rng.uniform());
  return im;
}

}  // namespace dfir::test
