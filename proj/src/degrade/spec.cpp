#include "dfir/degrade/spec.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"

namespace dfir::degrade {

using nlohmann::json;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kRain: return "rain";
    case Kind::kHaze: return "haze";
    case Kind::kSnow: return "snow";
    case Kind::kNoiseOnly: return "noise-only";
  }
  return "?";
}

Kind kind_from_string(std::string_view name) {
  for (Kind k : kAllKinds)
    if (to_string(k) == name) return k;
  throw ValidationError("unknown degradation kind '" + std::string(name) + "'");
}

const std::map<std::string, FieldRange, std::less<>>& field_ranges() {
  static const std::map<std::string, FieldRange, std::less<>> ranges = {
      {"rain.angle", {-90.0, 90.0}},      {"rain.length", {1.0, 64.0}},
      {"rain.density", {0.0, 200.0}},     {"rain.streak_intensity", {0.0, 1.0}},
      {"haze.transmission", {0.0, 1.0}},  {"haze.airlight", {0.0, 1.0}},
      {"haze.airlight_r", {0.0, 1.0}},    {"haze.airlight_g", {0.0, 1.0}},
      {"haze.airlight_b", {0.0, 1.0}},    {"snow.flake_radius", {0.5, 16.0}},
      {"snow.density", {0.0, 200.0}},     {"snow.opacity", {0.0, 1.0}},
      {"noise_sigma", {0.0, 1.0}},
  };
  return ranges;
}

namespace {

void check_field(std::string_view key, double value) {
  const auto& r = field_ranges().find(key)->second;
  if (!std::isfinite(value) || value < r.lo || value > r.hi) {
    std::ostringstream os;
    os << "degradation field " << key << " = " << value << " outside [" << r.lo << ", " << r.hi
       << "]";
    throw ValidationError(os.str());
  }
}

}  // namespace

void DegradationSpec::validate() const {
  check_field("noise_sigma", noise_sigma);
  switch (kind) {
    case Kind::kRain:
      check_field("rain.angle", rain.angle_deg);
      check_field("rain.length", rain.length);
      check_field("rain.density", rain.density);
      check_field("rain.streak_intensity", rain.streak_intensity);
      break;
    case Kind::kHaze:
      check_field("haze.transmission", haze.transmission);
      for (double a : haze.airlight) check_field("haze.airlight", a);
      break;
    case Kind::kSnow:
      check_field("snow.flake_radius", snow.flake_radius);
      check_field("snow.density", snow.density);
      check_field("snow.opacity", snow.opacity);
      break;
    case Kind::kNoiseOnly:
      break;
  }
}

int DegradationSpec::kernel_extent() const {
  switch (kind) {
    case Kind::kRain:
      if (rain.density <= 0.0) return 1;
      return 2 * static_cast<int>(std::ceil(rain.length / 2.0)) + 1;
    case Kind::kSnow:
      if (snow.density <= 0.0) return 1;
      return 2 * static_cast<int>(std::ceil(1.5 * snow.flake_radius)) + 3;
    default:
      return 1;
  }
}

bool DegradationSpec::is_identity() const {
  if (noise_sigma != 0.0) return false;
  switch (kind) {
    case Kind::kRain: return rain.density == 0.0 || rain.streak_intensity == 0.0;
    case Kind::kHaze: return haze.transmission == 1.0;
    case Kind::kSnow: return snow.density == 0.0 || snow.opacity == 0.0;
    case Kind::kNoiseOnly: return true;
  }
  return false;
}

void DomainProfile::validate() const {
  if (mixture.empty()) throw ValidationError("profile '" + name + "': empty kind mixture");
  double total = 0.0;
  for (const auto& [kind, w] : mixture) {
    if (!(w >= 0.0)) throw ValidationError("profile '" + name + "': negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("profile '" + name + "': mixture weights sum to " +
                          std::to_string(total) + ", expected 1");
  for (const auto& [key, dist] : params) {
    auto it = field_ranges().find(key);
    if (it == field_ranges().end())
      throw ValidationError("profile '" + name + "': unknown parameter '" + key + "'");
    const FieldRange& r = it->second;
    if (!(dist.lo <= dist.hi) || dist.lo < r.lo || dist.hi > r.hi)
      throw ValidationError("profile '" + name + "': bounds of '" + key + "' outside field range");
    if (dist.shape == ParamDistribution::Shape::kNormal && !(dist.stddev >= 0.0))
      throw ValidationError("profile '" + name + "': negative stddev for '" + key + "'");
  }
}

namespace {

double draw(const ParamDistribution& d, Rng& rng) {
  if (d.lo == d.hi) return d.lo;
  if (d.shape == ParamDistribution::Shape::kUniform) return rng.uniform(d.lo, d.hi);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = rng.normal(d.mean, d.stddev);
    if (v >= d.lo && v <= d.hi) return v;
  }
  return std::clamp(d.mean, d.lo, d.hi);
}

double draw_or(const DomainProfile& p, std::string_view key, Rng& rng, double fallback) {
  auto it = p.params.find(key);
  return it == p.params.end() ? fallback : draw(it->second, rng);
}

}  // namespace

DegradationSpec sample_spec(const DomainProfile& profile, std::uint64_t rng_seed) {
  profile.validate();
  Rng rng(rng_seed);
  DegradationSpec spec;

  const double u = rng.uniform();
  double acc = 0.0;
  spec.kind = profile.mixture.rbegin()->first;
  for (const auto& [kind, w] : profile.mixture) {
    acc += w;
    if (w > 0.0 && u < acc) {
      spec.kind = kind;
      break;
    }
  }

  switch (spec.kind) {
    case Kind::kRain:
      spec.rain.angle_deg = draw_or(profile, "rain.angle", rng, 0.0);
      spec.rain.length = draw_or(profile, "rain.length", rng, 1.0);
      spec.rain.density = draw_or(profile, "rain.density", rng, 0.0);
      spec.rain.streak_intensity = draw_or(profile, "rain.streak_intensity", rng, 0.0);
      break;
    case Kind::kHaze: {
      spec.haze.transmission = draw_or(profile, "haze.transmission", rng, 1.0);
      const double shared = draw_or(profile, "haze.airlight", rng, 1.0);
      spec.haze.airlight = {draw_or(profile, "haze.airlight_r", rng, shared),
                            draw_or(profile, "haze.airlight_g", rng, shared),
                            draw_or(profile, "haze.airlight_b", rng, shared)};
      break;
    }
    case Kind::kSnow:
      spec.snow.flake_radius = draw_or(profile, "snow.flake_radius", rng, 1.0);
      spec.snow.density = draw_or(profile, "snow.density", rng, 0.0);
      spec.snow.opacity = draw_or(profile, "snow.opacity", rng, 0.0);
      break;
    case Kind::kNoiseOnly:
      break;
  }
  spec.noise_sigma = draw_or(profile, "noise_sigma", rng, 0.0);
  spec.validate();
  return spec;
}

// --- serialization ---------------------------------------------------------

void to_json(json& j, const DegradationSpec& s) {
  j = json{{"kind", to_string(s.kind)}, {"noise_sigma", s.noise_sigma}};
  switch (s.kind) {
    case Kind::kRain:
      j["rain"] = {{"angle_deg", s.rain.angle_deg},
                   {"length", s.rain.length},
                   {"density", s.rain.density},
                   {"streak_intensity", s.rain.streak_intensity}};
      break;
    case Kind::kHaze:
      j["haze"] = {{"transmission", s.haze.transmission}, {"airlight", s.haze.airlight}};
      break;
    case Kind::kSnow:
      j["snow"] = {{"flake_radius", s.snow.flake_radius},
                   {"density", s.snow.density},
                   {"opacity", s.snow.opacity}};
      break;
    case Kind::kNoiseOnly:
      break;
  }
}

void from_json(const json& j, DegradationSpec& s) {
  s = DegradationSpec{};
  s.kind = kind_from_string(j.at("kind").get<std::string>());
  s.noise_sigma = j.value("noise_sigma", 0.0);
  if (auto it = j.find("rain"); it != j.end()) {
    s.rain.angle_deg = it->value("angle_deg", 0.0);
    s.rain.length = it->value("length", 1.0);
    s.rain.density = it->value("density", 0.0);
    s.rain.streak_intensity = it->value("streak_intensity", 0.0);
  }
  if (auto it = j.find("haze"); it != j.end()) {
    s.haze.transmission = it->value("transmission", 1.0);
    if (it->contains("airlight")) s.haze.airlight = it->at("airlight").get<std::array<double, 3>>();
  }
  if (auto it = j.find("snow"); it != j.end()) {
    s.snow.flake_radius = it->value("flake_radius", 1.0);
    s.snow.density = it->value("density", 0.0);
    s.snow.opacity = it->value("opacity", 0.0);
  }
}

void to_json(json& j, const DomainProfile& p) {
  json mixture = json::object();
  for (const auto& [k, w] : p.mixture) mixture[std::string(to_string(k))] = w;
  json params = json::object();
  for (const auto& [key, d] : p.params) {
    if (d.shape == ParamDistribution::Shape::kUniform)
      params[key] = {{"dist", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
    else
      params[key] = {{"dist", "normal"}, {"mean", d.mean}, {"stddev", d.stddev},
                     {"lo", d.lo},       {"hi", d.hi}};
  }
  j = json{{"name", p.name}, {"mixture", mixture}, {"params", params}};
}

void from_json(const json& j, DomainProfile& p) {
  for (const auto& [key, _] : j.items())
    if (key != "name" && key != "mixture" && key != "params")
      throw ValidationError("profile: unknown key '" + key + "'");
  p = DomainProfile{};
  p.name = j.value("name", std::string("unnamed"));
  for (const auto& [kind, w] : j.at("mixture").items()) p.mixture[kind_from_string(kind)] = w.get<double>();
  if (j.contains("params")) {
    for (const auto& [key, v] : j.at("params").items()) {
      ParamDistribution d;
      if (v.is_number()) {
        d = ParamDistribution::point(v.get<double>());
      } else {
        const std::string dist = v.value("dist", std::string("uniform"));
        if (dist == "uniform") {
          d = ParamDistribution::uniform(v.at("lo").get<double>(), v.at("hi").get<double>());
        } else if (dist == "normal") {
          d.shape = ParamDistribution::Shape::kNormal;
          d.mean = v.at("mean").get<double>();
          d.stddev = v.at("stddev").get<double>();
          const auto& r = field_ranges().contains(key) ? field_ranges().find(key)->second
                                                       : FieldRange{-1e300, 1e300};
          d.lo = v.value("lo", r.lo);
          d.hi = v.value("hi", r.hi);
        } else {
          throw ValidationError("profile: unknown distribution '" + dist + "' for " + key);
        }
      }
      p.params[key] = d;
    }
  }
  p.validate();
}

DomainProfile load_profile(const std::string& path) {
  if (path.rfind("builtin:", 0) == 0) return builtin_profile(path.substr(8));
  std::ifstream in(path);
  if (!in) throw IoError("cannot open profile " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("profile " + path + ": " + e.what());
  }
  return j.get<DomainProfile>();
}

void save_profile(const DomainProfile& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write profile " + path);
  out << json(profile).dump(2) << "\n";
}

namespace {

using U = ParamDistribution;

void add_rain(DomainProfile& p, bool original) {
  if (original) {
    p.params["rain.angle"] = U::uniform(-20.0, 0.0);
    p.params["rain.length"] = U::uniform(8.0, 14.0);
    p.params["rain.density"] = U::uniform(4.0, 8.0);
    p.params["rain.streak_intensity"] = U::uniform(0.55, 0.85);
  } else {
    p.params["rain.angle"] = U::uniform(0.0, 20.0);
    p.params["rain.length"] = U::uniform(4.0, 8.0);
    p.params["rain.density"] = U::uniform(8.0, 14.0);
    p.params["rain.streak_intensity"] = U::uniform(0.3, 0.55);
  }
}

void add_haze(DomainProfile& p, bool original) {
  if (original) {
    p.params["haze.transmission"] = U::uniform(0.45, 0.7);
    p.params["haze.airlight"] = U::uniform(0.75, 0.92);
  } else {
    p.params["haze.transmission"] = U::uniform(0.7, 0.9);
    p.params["haze.airlight"] = U::uniform(0.6, 0.75);
  }
}

void add_snow(DomainProfile& p, bool original) {
  if (original) {
    p.params["snow.flake_radius"] = U::uniform(1.1, 1.8);
    p.params["snow.density"] = U::uniform(6.0, 10.0);
    p.params["snow.opacity"] = U::uniform(0.65, 0.9);
  } else {
    p.params["snow.flake_radius"] = U::uniform(0.6, 1.1);
    p.params["snow.density"] = U::uniform(10.0, 16.0);
    p.params["snow.opacity"] = U::uniform(0.4, 0.65);
  }
}

}  // namespace

std::vector<std::string> builtin_profile_names() {
  return {"original-rain", "web-rain", "original-haze", "web-haze", "original-snow",
          "web-snow",      "original-mix", "web-mix",   "broad"};
}

DomainProfile builtin_profile(std::string_view name) {
  DomainProfile p;
  p.name = std::string(name);
  const bool original = name.starts_with("original-");
  const std::string_view suffix = name.substr(name.find('-') + 1);
  if (name == "broad") {
    p.mixture = {{Kind::kRain, 1.0 / 3.0}, {Kind::kHaze, 1.0 / 3.0}, {Kind::kSnow, 1.0 / 3.0}};
    p.params["rain.angle"] = U::uniform(-25.0, 25.0);
    p.params["rain.length"] = U::uniform(4.0, 14.0);
    p.params["rain.density"] = U::uniform(4.0, 14.0);
    p.params["rain.streak_intensity"] = U::uniform(0.3, 0.85);
    p.params["haze.transmission"] = U::uniform(0.45, 0.9);
    p.params["haze.airlight"] = U::uniform(0.6, 0.92);
    p.params["snow.flake_radius"] = U::uniform(0.6, 1.8);
    p.params["snow.density"] = U::uniform(6.0, 16.0);
    p.params["snow.opacity"] = U::uniform(0.4, 0.9);
    p.params["noise_sigma"] = U::uniform(0.0, 0.02);
  } else if (name.starts_with("original-") || name.starts_with("web-")) {
    if (suffix == "rain") {
      p.mixture = {{Kind::kRain, 1.0}};
    } else if (suffix == "haze") {
      p.mixture = {{Kind::kHaze, 1.0}};
    } else if (suffix == "snow") {
      p.mixture = {{Kind::kSnow, 1.0}};
    } else if (suffix == "mix") {
      p.mixture = {{Kind::kRain, 1.0 / 3.0}, {Kind::kHaze, 1.0 / 3.0}, {Kind::kSnow, 1.0 / 3.0}};
    } else {
      throw ValidationError("unknown builtin profile '" + std::string(name) + "'");
    }
    if (p.mixture.contains(Kind::kRain)) add_rain(p, original);
    if (p.mixture.contains(Kind::kHaze)) add_haze(p, original);
    if (p.mixture.contains(Kind::kSnow)) add_snow(p, original);
    p.params["noise_sigma"] = original ? U::uniform(0.0, 0.01) : U::uniform(0.005, 0.02);
  } else {
    throw ValidationError("unknown builtin profile '" + std::string(name) + "'");
  }
  p.validate();
  return p;
}

}  // namespace dfir::degrade
