#pragma once

#include <cstdint>
#include <vector>

#include "dfir/core/image.hpp"
#include "dfir/degrade/spec.hpp"

namespace dfir::degrade {

// Square line kernel of the given length and angle, peak-normalized to 1.
std::vector<float> motion_kernel(double length, double angle_deg, int* extent);

// Y = X * B + n for rain and snow (additive layers rendered through a motion
// kernel), Y = t X + (1 - t) A + n for haze. Output is clipped to [0, 1] and
// depends only on (clean, spec, rng_seed).
Image apply_degradation(const Image& clean, const DegradationSpec& spec, std::uint64_t rng_seed);

}  // namespace dfir::degrade
