#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "json.hpp"

namespace dfir::degrade {

enum class Kind { kRain, kHaze, kSnow, kNoiseOnly };

inline constexpr std::array<Kind, 4> kAllKinds = {Kind::kRain, Kind::kHaze, Kind::kSnow,
                                                  Kind::kNoiseOnly};

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view name);
inline int kind_index(Kind kind) { return static_cast<int>(kind); }

struct RainParams {
  double angle_deg = 0.0;         // from vertical, positive leans right
  double length = 1.0;            // pixels
  double density = 0.0;           // streaks per kilopixel
  double streak_intensity = 0.0;  // [0, 1]

  friend bool operator==(const RainParams&, const RainParams&) = default;
};

struct HazeParams {
  double transmission = 1.0;                 // t in [0, 1]
  std::array<double, 3> airlight{1.0, 1.0, 1.0};  // A per channel

  friend bool operator==(const HazeParams&, const HazeParams&) = default;
};

struct SnowParams {
  double flake_radius = 1.0;  // pixels
  double density = 0.0;       // flakes per kilopixel
  double opacity = 0.0;       // [0, 1]

  friend bool operator==(const SnowParams&, const SnowParams&) = default;
};

// One concrete corruption. Zero density, t = 1 and sigma = 0 are the identity.
struct DegradationSpec {
  Kind kind = Kind::kNoiseOnly;
  RainParams rain;
  HazeParams haze;
  SnowParams snow;
  double noise_sigma = 0.0;

  // Throws ValidationError naming the offending field.
  void validate() const;
  // Side length of the square rendering kernel this spec needs (1 if none).
  int kernel_extent() const;
  bool is_identity() const;

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

// Closed ranges every spec field must respect. Keys are the profile parameter
// names, e.g. "rain.angle" or "haze.transmission".
struct FieldRange {
  double lo;
  double hi;
};
const std::map<std::string, FieldRange, std::less<>>& field_ranges();

struct ParamDistribution {
  enum class Shape { kUniform, kNormal };
  Shape shape = Shape::kUniform;
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;    // normal only
  double stddev = 0.0;  // normal only; truncated to [lo, hi]

  static ParamDistribution point(double v) { return {Shape::kUniform, v, v, v, 0.0}; }
  static ParamDistribution uniform(double lo, double hi) { return {Shape::kUniform, lo, hi, 0.0, 0.0}; }
};

// Sampling distributions for spec fields plus a mixture over kinds. Fields not
// listed keep their identity value.
struct DomainProfile {
  std::string name;
  std::map<Kind, double> mixture;
  std::map<std::string, ParamDistribution, std::less<>> params;

  void validate() const;
};

void to_json(nlohmann::json& j, const DegradationSpec& spec);
void from_json(const nlohmann::json& j, DegradationSpec& spec);
void to_json(nlohmann::json& j, const DomainProfile& profile);
void from_json(const nlohmann::json& j, DomainProfile& profile);

DomainProfile load_profile(const std::string& path);
void save_profile(const DomainProfile& profile, const std::string& path);

DegradationSpec sample_spec(const DomainProfile& profile, std::uint64_t rng_seed);

// Built-in profiles. The "original" and "web" families use disjoint parameter
// ranges so that a domain shift exists by construction; "broad" covers both and
// is what the diffusion model is pretrained on.
DomainProfile builtin_profile(std::string_view name);
std::vector<std::string> builtin_profile_names();

}  // namespace dfir::degrade
