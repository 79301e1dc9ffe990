#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dfir/diffusion/pretrain.hpp"
#include "dfir/distill/trainer.hpp"
#include "dfir/nets/train.hpp"
#include "json.hpp"

namespace dfir::pipeline {

inline constexpr const char* kConfigSchema = "dfir.config/1";

struct DataConfig {
  int n_pretrain = 0;        // clean scenes behind the generative prior
  int pretrain_copies = 0;   // degraded copies per pretraining scene
  int pretrain_heldout = 0;  // scenes kept out of autoencoder training
  std::string pretrain_profile;
  int n_original = 0;  // paired corpus the teacher is trained on
  std::string original_profile;
  double test_fraction = 0.0;
  int n_web = 0;  // unpaired corpus the student may see
  std::string web_profile;
};

// A validated run configuration. The document always holds every key of its
// preset; user files may only override existing keys.
class RunConfig {
 public:
  static RunConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();

  // Overlays `overrides` on the preset named by overrides["preset"] (or
  // `fallback_preset`). Unknown keys, wrong types, a wrong schema tag or
  // out-of-range values throw ValidationError.
  static RunConfig from_json(const nlohmann::json& overrides, std::string_view fallback_preset = "smoke");
  static RunConfig load(const std::filesystem::path& path, std::string_view fallback_preset = "smoke");

  // Applies one dotted-key override, e.g. set("distill.lambda", 0.25).
  void set(const std::string& dotted_key, const nlohmann::json& value);
  void validate() const;

  const nlohmann::json& doc() const { return doc_; }
  std::string preset_name() const { return doc_.at("preset").get<std::string>(); }
  std::uint64_t seed() const { return doc_.at("seed").get<std::uint64_t>(); }
  int image_size() const { return doc_.at("image_size").get<int>(); }
  bool deterministic() const { return doc_.at("deterministic_mode").get<bool>(); }

  // SHA-256 of the canonical document.
  std::string fingerprint() const;
  // Fingerprint of one stage: its own config sections plus its upstream
  // stages, so editing a distillation knob leaves the pretrained stages valid.
  std::string stage_fingerprint(std::string_view stage) const;

  DataConfig data() const;
  diffusion::AutoencoderTrainConfig autoencoder() const;
  diffusion::DiffusionTrainConfig diffusion() const;
  nets::TeacherConfig teacher() const;
  distill::DistillConfig distill(std::uint64_t student_seed) const;
  std::vector<std::string> distill_variants() const;
  std::vector<std::string> ablation_variants() const;
  int replicates() const;
  int grid_images() const;

  // Seed of replicate `r` of any student run.
  std::uint64_t student_seed(int replicate) const;

 private:
  nlohmann::json doc_;
};

}  // namespace dfir::pipeline
