#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dfir::distill {

enum class Z0Source {
  kDirect,     // no generation: distill on stored degraded images
  kPureNoise,  // denoise from Gaussian latents
  kNoisedWeb,        // content-conditioned: partially noised clean latents
};

enum class PromptSource { kNone, kClassToken, kContent, kAdapter };

enum class DirectData { kWeb, kOriginal };

struct DistillVariant {
  std::string name;
  Z0Source z0 = Z0Source::kNoisedWeb;
  PromptSource prompt = PromptSource::kAdapter;
  DirectData data = DirectData::kWeb;  // only for kDirect
  bool extra = false;                  // not part of the reference ablation table
  std::string label;                   // human-readable description
};

// m0..m5, d4ir, data and the extra noise+none configuration.
const std::vector<DistillVariant>& all_variants();
// Throws ValidationError listing the known names.
const DistillVariant& variant_by_name(std::string_view name);
// The seven-row ablation matrix, in table order.
std::vector<std::string> ablation_matrix();

std::string_view to_string(Z0Source z);
std::string_view to_string(PromptSource p);

}  // namespace dfir::distill
