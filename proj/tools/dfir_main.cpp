#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfir/core/checkpoint.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/hash.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/degrade/corpus.hpp"
#include "dfir/degrade/spec.hpp"
#include "dfir/nets/train.hpp"
#include "dfir/pipeline/config.hpp"
#include "dfir/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfir;
using namespace dfir::pipeline;

namespace {

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string config;
  std::string run_name;
  std::string run_dir;
  std::vector<std::string> overrides;  // key=value, value parsed as JSON when possible
  bool force = false;
  bool allow_mixed = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--preset", o.preset, "Configuration preset (smoke, desk)");
  cmd->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--run-name", o.run_name, "Run directory name under the artifact root (default: preset)");
  cmd->add_option("--run-dir", o.run_dir, "Explicit run directory (overrides the artifact root)");
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set distill.lambda=0.25");
  cmd->add_flag("--force", o.force, "Recompute stages that are up to date");
  cmd->add_flag("--allow-mixed", o.allow_mixed, "Evaluate artifacts with differing fingerprints");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig::preset(o.preset.empty() ? "smoke" : o.preset)
                                   : RunConfig::load(o.config, o.preset.empty() ? "smoke" : o.preset);
  if (!o.preset.empty() && cfg.preset_name() != o.preset)
    throw ValidationError("--preset " + o.preset + " conflicts with preset '" + cfg.preset_name() + "' in " + o.config);
  if (o.seed) cfg.set("seed", *o.seed);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    const std::string value = kv.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    cfg.set(kv.substr(0, eq), v);
  }
  cfg.validate();
  return cfg;
}

fs::path resolve_run_dir(const CommonOptions& o, const RunConfig& cfg) {
  if (!o.run_dir.empty()) return o.run_dir;
  return artifact_root() / (o.run_name.empty() ? cfg.preset_name() : o.run_name);
}

void log_result(const fs::path& run_dir, const std::string& command, const StageResult& r) {
  fs::create_directories(run_dir / "logs");
  std::ofstream out(run_dir / "logs" / "cli.jsonl", std::ios::app);
  json outputs = json::array();
  for (const auto& p : r.outputs) outputs.push_back(p.string());
  out << json{{"time", static_cast<std::int64_t>(std::time(nullptr))},
              {"command", command},
              {"stage", r.stage},
              {"up_to_date", r.up_to_date},
              {"training_steps", r.training_steps},
              {"seconds", r.seconds},
              {"outputs", outputs}}
             .dump()
      << '\n';
}

void print_result(const StageResult& r) {
  std::cout << r.stage << ": " << (r.up_to_date ? "up to date" : "done") << " (" << r.training_steps
            << " training steps, " << static_cast<int>(r.seconds) << " s)\n";
}

struct SynthOptions {
  std::string profile;
  int n = 0;
  bool paired = true;
  std::optional<double> test_fraction;
  std::string source;
  std::string out;
};

// Standalone corpus outside any run directory.
fs::path synth_standalone(const SynthOptions& o, const RunConfig& cfg, std::uint64_t seed) {
  if (o.profile.empty() || o.n < 1) throw ValidationError("synth --out needs --profile and --n >= 1");
  const auto profile = degrade::load_profile(o.profile);
  profile.validate();
  const fs::path out = o.out;
  fs::path source = o.source;
  if (source.empty()) {
    source = out / "scenes";
    degrade::generate_scene_directory(source, o.n, cfg.image_size(), derive_seed(seed, {1}));
  }
  degrade::CorpusOptions co;
  co.paired = o.paired;
  co.n_images = o.n;
  co.corpus_seed = derive_seed(seed, {2});
  co.test_fraction = co.paired ? o.test_fraction.value_or(cfg.doc()["data"]["test_fraction"].get<double>()) : 0.0;
  const json identity = {{"profile", json(profile)}, {"n", o.n},        {"paired", co.paired},
                         {"seed", seed},             {"source", source.string()}, {"test_fraction", co.test_fraction}};
  co.fingerprint = sha256_hex(identity.dump()).substr(0, 16);
  degrade::build_corpus(source, profile, co, out);
  return out / "manifest.jsonl";
}

// Teacher trained on an explicit paired manifest, written to `out`.
fs::path teacher_standalone(const fs::path& manifest_path, const fs::path& out, const RunConfig& cfg) {
  if (out.empty()) throw ValidationError("pretrain-teacher --manifest needs --out");
  const auto manifest = degrade::DatasetManifest::load(manifest_path);
  const std::string fp = sha256_hex(cfg.doc()["teacher"].dump() + manifest.fingerprint).substr(0, 16);
  Checkpoint ckpt = nets::pretrain_teacher(manifest, cfg.teacher(), fp);
  ckpt.meta["lineage"] = {{"synth", manifest.fingerprint}};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ckpt.save(out);
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 2;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 3;
  if (dynamic_cast<const IntegrityError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free distillation of weather restoration networks"};
  app.require_subcommand(1);
  CommonOptions common;

  std::vector<std::string> stage_commands = {"synth", "pretrain-ae", "pretrain-diffusion", "pretrain-teacher",
                                             "ablate", "report", "run"};
  std::vector<CLI::App*> subs;
  for (const auto& name : stage_commands) {
    std::string help = name == "run" ? "Run all eight stages" : "Run the " + name + " stage";
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    subs.push_back(cmd);
  }

  SynthOptions synth_opts;
  auto* synth_cmd = subs[0];
  synth_cmd->add_option("--profile", synth_opts.profile, "Degradation profile file or builtin:<name> (with --out)");
  synth_cmd->add_option("--n", synth_opts.n, "Number of images (with --out)");
  synth_cmd->add_flag("--paired,!--unpaired", synth_opts.paired, "Paired (default) or unpaired corpus");
  synth_cmd->add_option("--test-fraction", synth_opts.test_fraction, "Held-out share of a paired corpus");
  synth_cmd->add_option("--source", synth_opts.source, "Directory of clean PNGs (default: generated scenes)");
  synth_cmd->add_option("--out", synth_opts.out, "Build a standalone corpus here instead of a run stage");

  std::string teacher_manifest, teacher_out;
  auto* teacher_cmd = subs[3];
  teacher_cmd->add_option("--manifest", teacher_manifest, "Train on this paired manifest instead of the run's corpus")
      ->check(CLI::ExistingFile);
  teacher_cmd->add_option("--out", teacher_out, "Checkpoint path (with --manifest)");

  auto* distill_cmd = app.add_subcommand("distill", "Distill students for the given variants");
  add_common(distill_cmd, common);
  std::vector<std::string> variants;
  int max_steps = -1;
  std::optional<double> lambda_override;
  bool cache_generated = false;
  distill_cmd->add_option("--variant", variants, "m0..m5, d4ir, data (repeatable; default: configured list)");
  distill_cmd->add_option("--max-steps", max_steps, "Stop after this many steps; rerun to resume");
  distill_cmd->add_option("--lambda", lambda_override, "Noise level of generation");
  distill_cmd->add_flag("--cache-generated", cache_generated, "Generate one fixed input set and reuse it");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate students and teacher on the original test split");
  add_common(eval_cmd, common);
  std::vector<std::string> eval_ckpts;
  std::string eval_manifest;
  eval_cmd->add_option("--ckpt", eval_ckpts, "Checkpoint(s) to evaluate instead of the run's students");
  eval_cmd->add_option("--manifest", eval_manifest, "Paired manifest with a test split");

  auto* sample_cmd = app.add_subcommand("sample", "Write conditioned samples of the diffusion prior");
  add_common(sample_cmd, common);
  double sample_lambda = 1.0;
  std::string prompt_kind = "rain";
  int sample_count = 8;
  std::string sample_out;
  sample_cmd->add_option("--lambda", sample_lambda, "1 samples from noise; below 1 edits clean web images");
  sample_cmd->add_option("--prompt-kind", prompt_kind, "rain, haze, snow, noise-only or none");
  sample_cmd->add_option("--count", sample_count, "Number of samples");
  sample_cmd->add_option("--out", sample_out, "Output PNG");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto* chosen = app.get_subcommands().front();
    const std::string command = chosen->get_name();
    RunConfig cfg = resolve_config(common);
    if (command == "distill") {
      if (lambda_override) cfg.set("distill.lambda", *lambda_override);
      if (cache_generated) cfg.set("distill.cache_generated", true);
      cfg.validate();
    }

    if (command == "synth" && !synth_opts.out.empty()) {
      std::cout << synth_standalone(synth_opts, cfg, cfg.seed()).string() << '\n';
      return 0;
    }
    if (command == "pretrain-teacher" && !teacher_manifest.empty()) {
      std::cout << teacher_standalone(teacher_manifest, teacher_out, cfg).string() << '\n';
      return 0;
    }
    if (command == "eval" && !eval_ckpts.empty()) {
      if (eval_manifest.empty()) throw ValidationError("eval --ckpt needs --manifest");
      std::vector<fs::path> paths(eval_ckpts.begin(), eval_ckpts.end());
      for (const auto& row : evaluate_checkpoints(paths, eval_manifest, common.allow_mixed))
        std::cout << json(row).dump() << '\n';
      return 0;
    }

    const fs::path run_dir = resolve_run_dir(common, cfg);
    PipelineOptions po;
    po.force = common.force;
    po.allow_mixed = common.allow_mixed;
    po.progress = common.quiet ? nullptr : &std::cerr;
    Pipeline pipeline(cfg, run_dir, po);

    if (command == "sample") {
      const auto seed = common.seed.value_or(cfg.seed());
      const auto out = pipeline.sample(sample_lambda, prompt_kind, sample_count, seed, sample_out);
      std::cout << out.string() << '\n';
      return 0;
    }
    if (command == "eval" && !eval_manifest.empty())
      throw ValidationError("eval --manifest needs --ckpt; without both the run's own test split is used");

    std::vector<StageResult> results;
    if (command == "run") results = pipeline.run();
    else if (command == "distill") results.push_back(pipeline.distill(variants, max_steps));
    else results.push_back(pipeline.run_stage(command));
    for (const auto& r : results) {
      log_result(run_dir, command, r);
      print_result(r);
    }
    if (command == "run" || command == "report")
      std::cout << "report: " << (pipeline.report_dir() / "results.md").string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
