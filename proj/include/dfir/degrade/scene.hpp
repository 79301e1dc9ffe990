#pragma once

#include <cstdint>

#include "dfir/core/image.hpp"

namespace dfir::degrade {

// Procedural clean imagery: smooth gradient backdrop, a handful of flat and
// striped shapes, and band-limited texture. Deterministic in the seed.
Image generate_scene(int height, int width, std::uint64_t seed);

}  // namespace dfir::degrade
