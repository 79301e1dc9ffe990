#include "dfir/distill/variant.hpp"

#include "dfir/core/error.hpp"

namespace dfir::distill {

const std::vector<DistillVariant>& all_variants() {
  static const std::vector<DistillVariant> variants = {
      {"m0", Z0Source::kDirect, PromptSource::kNone, DirectData::kWeb, false, "web data, no generation"},
      {"m1", Z0Source::kPureNoise, PromptSource::kClassToken, DirectData::kWeb, false, "noise + class token"},
      {"m2", Z0Source::kPureNoise, PromptSource::kAdapter, DirectData::kWeb, false, "noise + adapter"},
      {"m3", Z0Source::kPureNoise, PromptSource::kContent, DirectData::kWeb, false, "noise + content token"},
      {"m4", Z0Source::kNoisedWeb, PromptSource::kNone, DirectData::kWeb, false, "noised web + none"},
      {"m5", Z0Source::kNoisedWeb, PromptSource::kClassToken, DirectData::kWeb, false, "noised web + class token"},
      {"d4ir", Z0Source::kNoisedWeb, PromptSource::kAdapter, DirectData::kWeb, false, "noised web + adapter"},
      {"data", Z0Source::kDirect, PromptSource::kNone, DirectData::kOriginal, false, "original-domain data"},
      {"noise-none", Z0Source::kPureNoise, PromptSource::kNone, DirectData::kWeb, true, "noise + none"},
  };
  return variants;
}

const DistillVariant& variant_by_name(std::string_view name) {
  std::string known;
  for (const auto& v : all_variants()) {
    if (v.name == name) return v;
    known += (known.empty() ? "" : ", ") + v.name;
  }
  throw ValidationError("unknown variant '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<std::string> ablation_matrix() { return {"m0", "m1", "m2", "m3", "m4", "m5", "d4ir"}; }

std::string_view to_string(Z0Source z) {
  switch (z) {
    case Z0Source::kDirect: return "direct";
    case Z0Source::kPureNoise: return "pure_noise";
    case Z0Source::kNoisedWeb: return "noised_web";
  }
  return "?";
}

std::string_view to_string(PromptSource p) {
  switch (p) {
    case PromptSource::kNone: return "none";
    case PromptSource::kClassToken: return "class_token";
    case PromptSource::kContent: return "content_token";
    case PromptSource::kAdapter: return "dpa";
  }
  return "?";
}

}  // namespace dfir::distill
