#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dfir/core/checkpoint.hpp"
#include "dfir/degrade/corpus.hpp"
#include "dfir/distill/trainer.hpp"
#include "dfir/distill/variant.hpp"
#include "dfir/eval/report.hpp"
#include "dfir/pipeline/config.hpp"

namespace dfir::pipeline {

inline constexpr const char* kArtifactRootEnv = "DFIR_ARTIFACT_ROOT";

// $DFIR_ARTIFACT_ROOT, or ./artifacts when unset.
std::filesystem::path artifact_root();

std::vector<std::string> stage_names();

struct StageResult {
  std::string stage;
  bool up_to_date = false;      // nothing was recomputed
  std::int64_t training_steps = 0;
  double seconds = 0.0;
  std::vector<std::filesystem::path> outputs;
};

struct PipelineOptions {
  bool force = false;        // recompute even when a stage is up to date
  bool allow_mixed = false;  // let eval combine artifacts of different fingerprints
  std::ostream* progress = nullptr;
};

// Exclusive advisory lock on <run_dir>/.lock for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

// One run directory:
//   config.json
//   synth/{scenes/, original/manifest.jsonl, web/manifest.jsonl}
//   pretrain-ae/autoencoder.ckpt  pretrain-diffusion/diffusion.ckpt
//   pretrain-teacher/teacher.ckpt
//   distill/<variant>-r<k>.ckpt  distill/<variant>-r<k>.log.jsonl
//   ablate/rows.jsonl  eval/rows.jsonl  report/{results.md, results.jsonl, grids/}
// Every stage writes <stage>/stamp.json with its fingerprint; a stage whose
// stamp matches the current configuration is skipped.
class Pipeline {
 public:
  // Takes the run lock; a second Pipeline on the same directory throws.
  Pipeline(RunConfig config, std::filesystem::path run_dir, PipelineOptions options = {});

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return dir_; }

  StageResult synth();
  StageResult pretrain_autoencoder();
  StageResult pretrain_diffusion();
  StageResult pretrain_teacher();
  // Distills the given variants (default: the configured list) for every
  // replicate. `max_steps` stops early; a later call resumes the partial run.
  StageResult distill(const std::vector<std::string>& variants = {}, int max_steps = -1);
  StageResult ablate();
  StageResult eval();
  StageResult report();
  // All eight stages in order.
  std::vector<StageResult> run();
  StageResult run_stage(const std::string& name);

  // Paths of stage artifacts.
  std::filesystem::path original_manifest() const;
  std::filesystem::path web_manifest() const;
  std::filesystem::path autoencoder_path() const;
  std::filesystem::path diffusion_path() const;
  std::filesystem::path teacher_path() const;
  std::filesystem::path student_path(const std::string& variant, int replicate) const;
  std::filesystem::path student_log_path(const std::string& variant, int replicate) const;
  std::filesystem::path report_dir() const;

  // Class-token (or null-token) conditioned generation: with lambda = 1 from
  // pure noise, otherwise by partially noising clean web images. Writes a
  // contact sheet and returns its path.
  std::filesystem::path sample(double lambda, const std::string& prompt_kind, int count,
                               std::uint64_t seed, const std::filesystem::path& out = {});

 private:
  bool fresh(const std::string& stage) const;
  void stamp(const std::string& stage, const StageResult& r) const;
  void require_stage(const std::string& stage, const std::string& needed_by) const;
  void note(const std::string& line) const;
  std::vector<eval::MetricRow> score_students(const std::vector<std::string>& variants, const std::string& dataset);

  RunConfig config_;
  std::filesystem::path dir_;
  PipelineOptions options_;
  std::shared_ptr<RunLock> lock_;
};

// True for variants that distill directly on the original training images.
bool uses_original_data(const distill::DistillVariant& variant);

// Student inputs: the original training images when `original_train`,
// otherwise the unpaired web pool with kinds and clean images. The original
// test split is attached for evaluation either way.
distill::DistillData load_distill_data(const std::filesystem::path& original_manifest,
                                       const std::filesystem::path& web_manifest, bool original_train);

// Evaluates restoration checkpoints on the test split of a paired manifest.
// Inputs whose recorded data fingerprint differs from the manifest's are
// refused with IntegrityError unless `allow_mixed`.
std::vector<eval::MetricRow> evaluate_checkpoints(const std::vector<std::filesystem::path>& checkpoints,
                                                  const std::filesystem::path& manifest, bool allow_mixed);

}  // namespace dfir::pipeline
