#include "dfir/pipeline/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfir/core/dataset.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/diffusion/pretrain.hpp"
#include "dfir/distill/trainer.hpp"
#include "dfir/distill/variant.hpp"
#include "dfir/eval/evaluate.hpp"
#include "dfir/nets/train.hpp"

namespace dfir::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string command_for(const std::string& stage) { return "dfir " + stage; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IntegrityError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, p);
}

void write_rows(const fs::path& p, const std::vector<eval::MetricRow>& rows) {
  std::string text;
  for (const auto& r : rows) text += json(r).dump() + "\n";
  write_text(p, text);
}

std::vector<Image> read_scene_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_png(f));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int prompt_kind_index(const std::string& name) {
  if (name == "none" || name == "null") return static_cast<int>(diffusion::ClassTokensImpl::kNull);
  try {
    return degrade::kind_index(degrade::kind_from_string(name));
  } catch (const std::exception&) {
    throw ValidationError("unknown prompt kind '" + name + "' (use rain, haze, snow, noise-only or none)");
  }
}

struct PretrainPool {
  std::vector<Image> train_clean;
  std::vector<Image> held_clean;
  diffusion::LabeledPool degraded;
};

PretrainPool load_pretrain_pool(const fs::path& scenes, const RunConfig& cfg) {
  const DataConfig d = cfg.data();
  PretrainPool p;
  auto all = read_scene_dir(scenes);
  if (static_cast<int>(all.size()) != d.n_pretrain)
    throw IntegrityError("pretraining scenes at " + scenes.string() + " do not match the configuration; rerun `dfir synth`");
  const auto split = all.begin() + (d.n_pretrain - d.pretrain_heldout);
  p.train_clean.assign(all.begin(), split);
  p.held_clean.assign(split, all.end());
  p.degraded = diffusion::degrade_pool(p.train_clean, degrade::load_profile(d.pretrain_profile), d.pretrain_copies,
                                       derive_seed(cfg.seed(), {206}));
  return p;
}

std::uint64_t student_seed_of(const Checkpoint& ckpt) {
  if (ckpt.meta.contains("config") && ckpt.meta["config"].contains("seed"))
    return ckpt.meta["config"]["seed"].get<std::uint64_t>();
  return 0;
}

}  // namespace

bool uses_original_data(const distill::DistillVariant& v) {
  return v.z0 == distill::Z0Source::kDirect && v.data == distill::DirectData::kOriginal;
}

distill::DistillData load_distill_data(const fs::path& original_manifest, const fs::path& web_manifest,
                                       bool original_train) {
  const auto om = degrade::DatasetManifest::load(original_manifest);
  const auto test = load_pairs(om, degrade::Split::kTest);
  distill::DistillData d;
  d.test_degraded = test.degraded;
  d.test_clean = test.clean;
  if (original_train) {
    d.degraded = load_images(om, om.select(degrade::Role::kDegraded, degrade::Split::kTrain));
    return d;
  }
  const auto wm = degrade::DatasetManifest::load(web_manifest);
  const auto deg = wm.select(degrade::Role::kDegraded);
  d.degraded = load_images(wm, deg);
  for (const auto* rec : deg) d.degraded_kinds.push_back(rec->spec ? degrade::kind_index(rec->spec->kind) : 0);
  d.clean = load_images(wm, wm.select(degrade::Role::kClean));
  return d;
}

fs::path artifact_root() {
  const char* env = std::getenv(kArtifactRootEnv);
  return env && *env ? fs::path(env) : fs::path("artifacts");
}

std::vector<std::string> stage_names() {
  return {"synth", "pretrain-ae", "pretrain-diffusion", "pretrain-teacher", "distill", "ablate", "eval", "report"};
}

RunLock::RunLock(const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const fs::path p = run_dir / ".lock";
  fd_ = ::open(p.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file " + p.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("another pipeline run holds " + p.string());
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::ftruncate(fd_, 0) == 0) (void)!::write(fd_, pid.data(), pid.size());
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Pipeline::Pipeline(RunConfig config, fs::path run_dir, PipelineOptions options)
    : config_(std::move(config)), dir_(std::move(run_dir)), options_(options) {
  config_.validate();
  lock_ = std::make_shared<RunLock>(dir_);
  write_text(dir_ / "config.json", config_.doc().dump(2) + "\n");
  if (config_.deterministic()) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }
}

fs::path Pipeline::original_manifest() const { return dir_ / "synth" / "original" / "manifest.jsonl"; }
fs::path Pipeline::web_manifest() const { return dir_ / "synth" / "web" / "manifest.jsonl"; }
fs::path Pipeline::autoencoder_path() const { return dir_ / "pretrain-ae" / "autoencoder.ckpt"; }
fs::path Pipeline::diffusion_path() const { return dir_ / "pretrain-diffusion" / "diffusion.ckpt"; }
fs::path Pipeline::teacher_path() const { return dir_ / "pretrain-teacher" / "teacher.ckpt"; }
fs::path Pipeline::student_path(const std::string& variant, int replicate) const {
  return dir_ / "distill" / (variant + "-r" + std::to_string(replicate) + ".ckpt");
}
fs::path Pipeline::student_log_path(const std::string& variant, int replicate) const {
  return dir_ / "distill" / (variant + "-r" + std::to_string(replicate) + ".log.jsonl");
}
fs::path Pipeline::report_dir() const { return dir_ / "report"; }

void Pipeline::note(const std::string& line) const {
  if (options_.progress) *options_.progress << line << std::endl;
}

bool Pipeline::fresh(const std::string& stage) const {
  if (options_.force) return false;
  const fs::path p = dir_ / stage / "stamp.json";
  if (!fs::exists(p)) return false;
  const json s = read_json(p);
  if (s.value("fingerprint", "") != config_.stage_fingerprint(stage)) return false;
  for (const auto& o : s.value("outputs", json::array()))
    if (!fs::exists(dir_ / o.get<std::string>())) return false;
  return true;
}

void Pipeline::stamp(const std::string& stage, const StageResult& r) const {
  json outputs = json::array();
  for (const auto& o : r.outputs) outputs.push_back(fs::relative(o, dir_).string());
  const json s = {{"stage", stage},
                  {"fingerprint", config_.stage_fingerprint(stage)},
                  {"config_fingerprint", config_.fingerprint()},
                  {"training_steps", r.training_steps},
                  {"seconds", r.seconds},
                  {"outputs", outputs}};
  write_text(dir_ / stage / "stamp.json", s.dump(2) + "\n");
}

void Pipeline::require_stage(const std::string& stage, const std::string& needed_by) const {
  const fs::path p = dir_ / stage / "stamp.json";
  if (!fs::exists(p))
    throw MissingArtifactError(needed_by + " needs the output of stage '" + stage + "' in " + dir_.string() +
                               "; run `" + command_for(stage) + "` first");
  const json s = read_json(p);
  if (s.value("fingerprint", "") != config_.stage_fingerprint(stage))
    throw MissingArtifactError(needed_by + ": stage '" + stage + "' in " + dir_.string() +
                               " was produced by a different configuration; rerun `" + command_for(stage) + "`");
}

StageResult Pipeline::synth() {
  StageResult r{"synth"};
  r.outputs = {original_manifest(), web_manifest()};
  if (fresh("synth")) {
    r.up_to_date = true;
    note("synth: up to date");
    return r;
  }
  const auto t0 = Clock::now();
  const std::string fp = config_.stage_fingerprint("synth");
  const DataConfig d = config_.data();
  const int size = config_.image_size();
  const std::uint64_t seed = config_.seed();
  fs::remove_all(dir_ / "synth");
  const fs::path scenes = dir_ / "synth" / "scenes";
  note("synth: generating scenes");
  degrade::generate_scene_directory(scenes / "pretrain", d.n_pretrain, size, derive_seed(seed, {201}));
  degrade::generate_scene_directory(scenes / "original", d.n_original, size, derive_seed(seed, {202}));
  degrade::generate_scene_directory(scenes / "web", d.n_web, size, derive_seed(seed, {203}));
  note("synth: building corpora");
  degrade::build_corpus(scenes / "original", degrade::load_profile(d.original_profile),
                        {true, d.n_original, derive_seed(seed, {204}), d.test_fraction, fp}, dir_ / "synth" / "original");
  degrade::build_corpus(scenes / "web", degrade::load_profile(d.web_profile),
                        {false, d.n_web, derive_seed(seed, {205}), 0.0, fp}, dir_ / "synth" / "web");
  r.seconds = since(t0);
  stamp("synth", r);
  note("synth: done in " + std::to_string(static_cast<int>(r.seconds)) + " s");
  return r;
}

StageResult Pipeline::pretrain_autoencoder() {
  StageResult r{"pretrain-ae"};
  r.outputs = {autoencoder_path()};
  if (fresh("pretrain-ae")) {
    r.up_to_date = true;
    note("pretrain-ae: up to date");
    return r;
  }
  require_stage("synth", "pretrain-ae");
  const auto t0 = Clock::now();
  const auto pool = load_pretrain_pool(dir_ / "synth" / "scenes" / "pretrain", config_);
  const auto cfg = config_.autoencoder();
  note("pretrain-ae: " + std::to_string(cfg.steps) + " steps");
  const auto images = torch::cat({pool.degraded.images, to_tensor(pool.train_clean)});
  Checkpoint ckpt = diffusion::pretrain_autoencoder(images, to_tensor(pool.held_clean), cfg,
                                                    config_.stage_fingerprint("pretrain-ae"));
  ckpt.meta["lineage"] = {{"synth", config_.stage_fingerprint("synth")}};
  ckpt.save(autoencoder_path());
  r.training_steps = cfg.steps;
  r.seconds = since(t0);
  stamp("pretrain-ae", r);
  note("pretrain-ae: held-out " + ckpt.meta["metrics"].dump());
  return r;
}

StageResult Pipeline::pretrain_diffusion() {
  StageResult r{"pretrain-diffusion"};
  r.outputs = {diffusion_path()};
  if (fresh("pretrain-diffusion")) {
    r.up_to_date = true;
    note("pretrain-diffusion: up to date");
    return r;
  }
  require_stage("pretrain-ae", "pretrain-diffusion");
  const auto t0 = Clock::now();
  const auto pool = load_pretrain_pool(dir_ / "synth" / "scenes" / "pretrain", config_);
  const auto cfg = config_.diffusion();
  note("pretrain-diffusion: " + std::to_string(cfg.steps) + " steps");
  Checkpoint ckpt = diffusion::pretrain_diffusion(Checkpoint::load(autoencoder_path()), pool.degraded, cfg,
                                                  config_.stage_fingerprint("pretrain-diffusion"));
  ckpt.meta["lineage"] = {{"synth", config_.stage_fingerprint("synth")},
                          {"pretrain-ae", config_.stage_fingerprint("pretrain-ae")}};
  ckpt.save(diffusion_path());
  r.training_steps = cfg.steps;
  r.seconds = since(t0);
  stamp("pretrain-diffusion", r);
  note("pretrain-diffusion: " + ckpt.meta["metrics"].dump());
  return r;
}

StageResult Pipeline::pretrain_teacher() {
  StageResult r{"pretrain-teacher"};
  r.outputs = {teacher_path()};
  if (fresh("pretrain-teacher")) {
    r.up_to_date = true;
    note("pretrain-teacher: up to date");
    return r;
  }
  require_stage("synth", "pretrain-teacher");
  const auto t0 = Clock::now();
  const auto cfg = config_.teacher();
  note("pretrain-teacher: " + std::to_string(cfg.train.steps) + " steps");
  Checkpoint ckpt = nets::pretrain_teacher(degrade::DatasetManifest::load(original_manifest()), cfg,
                                           config_.stage_fingerprint("pretrain-teacher"));
  ckpt.meta["lineage"] = {{"synth", config_.stage_fingerprint("synth")}};
  ckpt.save(teacher_path());
  r.training_steps = cfg.train.steps;
  r.seconds = since(t0);
  stamp("pretrain-teacher", r);
  note("pretrain-teacher: " + ckpt.meta["metrics"].dump());
  return r;
}

StageResult Pipeline::distill(const std::vector<std::string>& requested, int max_steps) {
  StageResult r{"distill"};
  const auto t0 = Clock::now();
  const std::vector<std::string> names = requested.empty() ? config_.distill_variants() : requested;
  std::vector<distill::DistillVariant> variants;
  bool generative = false;
  for (const auto& n : names) {
    variants.push_back(distill::variant_by_name(n));
    generative |= variants.back().z0 != distill::Z0Source::kDirect;
  }
  require_stage("pretrain-teacher", "distill");
  if (generative) require_stage("pretrain-diffusion", "distill");

  const std::string fp = config_.stage_fingerprint("distill");
  const json lineage = {{"synth", config_.stage_fingerprint("synth")},
                        {"pretrain-teacher", config_.stage_fingerprint("pretrain-teacher")},
                        {"pretrain-diffusion", config_.stage_fingerprint("pretrain-diffusion")}};

  // Loaded lazily: an all-up-to-date call touches no data.
  std::optional<distill::DistillData> web, original;
  std::optional<Checkpoint> teacher_ckpt;
  std::optional<diffusion::LatentDiffusion> ld;
  const auto prepare = [&](const distill::DistillVariant& v) {
    if (!teacher_ckpt) teacher_ckpt = Checkpoint::load(teacher_path());
    if (uses_original_data(v)) {
      if (!original) original = load_distill_data(original_manifest(), web_manifest(), true);
      return;
    }
    if (!web) web = load_distill_data(original_manifest(), web_manifest(), false);
    if (v.z0 != distill::Z0Source::kDirect && !ld) {
      ld.emplace(diffusion::load_diffusion(Checkpoint::load(diffusion_path())));
      ld->freeze();
    }
  };

  bool all_fresh = true;
  for (const auto& v : variants) {
    for (int k = 0; k < config_.replicates(); ++k) {
      const fs::path path = student_path(v.name, k);
      r.outputs.push_back(path);
      std::optional<Checkpoint> resume;
      if (fs::exists(path) && !options_.force) {
        Checkpoint existing = Checkpoint::load(path);
        if (existing.fingerprint() == fp && existing.meta.value("variant", "") == v.name) {
          const json& ts = existing.meta["train_state"];
          const bool complete = ts.value("complete", false);
          const bool reached = max_steps >= 0 && ts.value("step", 0) >= max_steps;
          if (complete || reached) {
            note("distill " + v.name + " r" + std::to_string(k) + ": up to date");
            continue;
          }
          resume = std::move(existing);
        }
      }
      all_fresh = false;
      prepare(v);
      auto cfg = config_.distill(config_.student_seed(k));
      cfg.max_steps = max_steps;
      const distill::DistillData& data = uses_original_data(v) ? *original : *web;

      const fs::path log_path = student_log_path(v.name, k);
      fs::create_directories(log_path.parent_path());
      std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
      if (!log) throw IoError("cannot write " + log_path.string());
      const std::int64_t start = resume ? resume->meta["train_state"].value("step", 0) : 0;
      note("distill " + v.name + " r" + std::to_string(k) + (resume ? ": resuming at step " + std::to_string(start) : ": start"));
      const auto sink = [&](const json& rec) {
        json line = rec;
        line["variant"] = v.name;
        line["replicate"] = k;
        log << line.dump() << '\n';
        log.flush();
      };
      Checkpoint ckpt = distill::train_distill(v, data, nets::load_restoration_net(*teacher_ckpt),
                                               ld ? &*ld : nullptr, cfg, fp, resume ? &*resume : nullptr, sink);
      ckpt.meta["lineage"] = lineage;
      ckpt.meta["replicate"] = k;
      ckpt.save(path);
      r.training_steps += ckpt.meta["train_state"].value("step", 0) - start;
      note("distill " + v.name + " r" + std::to_string(k) + ": " + ckpt.meta["metrics"].dump());
    }
  }
  r.up_to_date = all_fresh;
  r.seconds = since(t0);
  stamp("distill", r);
  return r;
}

std::vector<eval::MetricRow> Pipeline::score_students(const std::vector<std::string>& variants,
                                                      const std::string& dataset) {
  std::vector<eval::MetricRow> rows;
  for (const auto& name : variants) {
    std::vector<fs::path> paths;
    for (int k = 0; k < config_.replicates(); ++k) {
      const fs::path p = student_path(name, k);
      if (!fs::exists(p))
        throw MissingArtifactError("no student checkpoint " + p.string() + "; run `dfir distill --variant " + name + "`");
      paths.push_back(p);
    }
    const auto scored = evaluate_checkpoints(paths, original_manifest(), options_.allow_mixed);
    eval::MetricRow row = scored.front();
    std::vector<double> psnr, ssim;
    row.seeds.clear();
    for (const auto& s : scored) {
      psnr.push_back(s.psnr_db);
      ssim.push_back(s.ssim);
      row.seeds.insert(row.seeds.end(), s.seeds.begin(), s.seeds.end());
    }
    row.psnr_db = median(psnr);
    row.ssim = median(ssim);
    row.dataset = dataset;
    const auto& v = distill::variant_by_name(name);
    row.note = v.label + (scored.size() > 1 ? "; median of " + std::to_string(scored.size()) + " seeds" : "");
    rows.push_back(row);
  }
  return rows;
}

StageResult Pipeline::ablate() {
  StageResult r{"ablate"};
  const fs::path rows_path = dir_ / "ablate" / "rows.jsonl";
  r.outputs = {rows_path};
  if (fresh("ablate")) {
    r.up_to_date = true;
    note("ablate: up to date");
    return r;
  }
  const auto t0 = Clock::now();
  const auto trained = distill(config_.ablation_variants());
  const auto rows = score_students(config_.ablation_variants(), "original-test (ablation)");
  write_rows(rows_path, rows);
  r.training_steps = trained.training_steps;
  r.seconds = since(t0);
  stamp("ablate", r);
  note("ablate: " + std::to_string(rows.size()) + " rows");
  return r;
}

std::vector<eval::MetricRow> evaluate_checkpoints(const std::vector<fs::path>& checkpoints, const fs::path& manifest_path,
                                                  bool allow_mixed) {
  const auto manifest = degrade::DatasetManifest::load(manifest_path);
  if (!manifest.paired()) throw ValidationError("eval: " + manifest_path.string() + " is not a paired manifest");
  const auto test = load_pairs(manifest, degrade::Split::kTest);
  if (test.degraded.size(0) == 0) throw ValidationError("eval: manifest has no test split");
  std::vector<eval::MetricRow> rows;
  for (const auto& path : checkpoints) {
    const Checkpoint ckpt = Checkpoint::load(path);
    const std::string data_fp = ckpt.meta.contains("lineage") ? ckpt.meta["lineage"].value("synth", "") : "";
    const bool mixed = data_fp != manifest.fingerprint;
    if (mixed && !allow_mixed)
      throw IntegrityError("eval: " + path.string() + " was trained on data '" + data_fp + "' but the manifest is '" +
                           manifest.fingerprint + "'; pass --allow-mixed to evaluate anyway");
    auto net = nets::load_restoration_net(ckpt);
    const auto score = eval::evaluate_restoration(net, test.degraded, test.clean);
    eval::MetricRow row;
    const std::string kind = ckpt.meta.value("kind", "");
    row.method = kind == "student" ? ckpt.meta.value("variant", "student") : kind;
    row.params_m = static_cast<double>(nets::param_count(*net)) / 1e6;
    row.psnr_db = score.psnr;
    row.ssim = score.ssim;
    row.dataset = manifest.domain + "-test";
    if (kind == "student") row.seeds = {student_seed_of(ckpt)};
    row.fingerprint = ckpt.fingerprint();
    if (mixed) row.note = "mixed fingerprint";
    rows.push_back(row);
  }
  return rows;
}

StageResult Pipeline::eval() {
  StageResult r{"eval"};
  const fs::path rows_path = dir_ / "eval" / "rows.jsonl";
  r.outputs = {rows_path};
  if (fresh("eval")) {
    r.up_to_date = true;
    note("eval: up to date");
    return r;
  }
  require_stage("pretrain-teacher", "eval");
  const auto t0 = Clock::now();
  const auto manifest = degrade::DatasetManifest::load(original_manifest());
  const auto test = load_pairs(manifest, degrade::Split::kTest);
  const auto input = eval::score_batches(test.degraded, test.clean);
  std::vector<eval::MetricRow> rows;
  rows.push_back({"input", 0.0, input.psnr, input.ssim, "original-test", {}, config_.stage_fingerprint("synth"),
                  "degraded input, no restoration"});
  auto teacher = evaluate_checkpoints({teacher_path()}, original_manifest(), options_.allow_mixed).front();
  teacher.dataset = "original-test";
  teacher.note = "supervised on the original corpus";
  rows.push_back(teacher);
  for (auto& row : score_students(config_.distill_variants(), "original-test")) rows.push_back(row);
  write_rows(rows_path, rows);
  r.seconds = since(t0);
  stamp("eval", r);
  for (const auto& row : rows)
    note("eval " + row.method + ": " + std::to_string(row.psnr_db) + " dB / " + std::to_string(row.ssim));
  return r;
}

StageResult Pipeline::report() {
  StageResult r{"report"};
  const fs::path out = report_dir();
  r.outputs = {out / "results.md", out / "results.jsonl"};
  if (fresh("report")) {
    r.up_to_date = true;
    note("report: up to date");
    return r;
  }
  require_stage("eval", "report");
  require_stage("ablate", "report");
  const auto t0 = Clock::now();
  std::vector<eval::MetricRow> rows;
  for (const fs::path p : {dir_ / "eval" / "rows.jsonl", dir_ / "ablate" / "rows.jsonl"}) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) rows.push_back(json::parse(line).get<eval::MetricRow>());
  }

  std::vector<eval::SampleGrid> grids;
  const auto manifest = degrade::DatasetManifest::load(original_manifest());
  const auto test = load_pairs(manifest, degrade::Split::kTest);
  const int64_t n = std::min<int64_t>(config_.grid_images(), test.degraded.size(0));
  const auto x = test.degraded.slice(0, 0, n);
  {
    eval::SampleGrid g{"restorations"};
    std::vector<std::vector<Image>> cols;
    g.columns.push_back("degraded");
    cols.push_back(to_images(x));
    auto teacher = nets::load_restoration_net(Checkpoint::load(teacher_path()));
    g.columns.push_back("teacher");
    cols.push_back(to_images(nets::restore(teacher, x)));
    for (const auto& v : config_.distill_variants()) {
      auto net = nets::load_restoration_net(Checkpoint::load(student_path(v, 0)));
      g.columns.push_back(v);
      cols.push_back(to_images(nets::restore(net, x)));
    }
    g.columns.push_back("clean");
    cols.push_back(to_images(test.clean.slice(0, 0, n)));
    for (int64_t i = 0; i < n; ++i) {
      std::vector<Image> row;
      for (const auto& c : cols) row.push_back(c[i]);
      g.rows.push_back(row);
    }
    grids.push_back(std::move(g));
  }
  if (fs::exists(diffusion_path())) {
    auto ld = diffusion::load_diffusion(Checkpoint::load(diffusion_path()));
    ld.freeze();
    const auto m = degrade::DatasetManifest::load(web_manifest());
    const auto clean = load_images(m, m.select(degrade::Role::kClean)).slice(0, 0, n);
    std::vector<int64_t> kinds;
    for (int64_t i = 0; i < n; ++i) kinds.push_back(i % 3);
    torch::NoGradGuard no_grad;
    const auto prompt = ld.tokens->forward(torch::tensor(kinds, torch::kInt64));
    eval::SampleGrid g{"generation", {"clean"}};
    std::vector<std::vector<Image>> cols = {to_images(clean)};
    for (double lambda : {0.25, 0.5, 1.0}) {
      g.columns.push_back("lambda " + std::to_string(lambda).substr(0, 4));
      cols.push_back(to_images(ld.generate(clean, prompt, lambda, {{}, derive_seed(config_.seed(), {301})})));
    }
    for (int64_t i = 0; i < n; ++i) {
      std::vector<Image> row;
      for (const auto& c : cols) row.push_back(c[i]);
      g.rows.push_back(row);
    }
    grids.push_back(std::move(g));
  }
  eval::emit_report(rows, grids, out, "Restoration results (" + config_.preset_name() + " preset)");
  for (const auto& g : grids) r.outputs.push_back(out / "grids" / (g.name + ".png"));
  r.seconds = since(t0);
  stamp("report", r);
  note("report: " + (out / "results.md").string());
  return r;
}

StageResult Pipeline::run_stage(const std::string& name) {
  if (name == "synth") return synth();
  if (name == "pretrain-ae") return pretrain_autoencoder();
  if (name == "pretrain-diffusion") return pretrain_diffusion();
  if (name == "pretrain-teacher") return pretrain_teacher();
  if (name == "distill") return distill();
  if (name == "ablate") return ablate();
  if (name == "eval") return eval();
  if (name == "report") return report();
  throw ValidationError("unknown stage '" + name + "'");
}

std::vector<StageResult> Pipeline::run() {
  std::vector<StageResult> out;
  for (const auto& s : stage_names()) out.push_back(run_stage(s));
  return out;
}

fs::path Pipeline::sample(double lambda, const std::string& prompt_kind, int count, std::uint64_t seed,
                          const fs::path& out_path) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("sample: lambda must be in [0, 1]");
  if (count < 1) throw ValidationError("sample: count must be positive");
  const int kind = prompt_kind_index(prompt_kind);
  require_stage("pretrain-diffusion", "sample");
  auto ld = diffusion::load_diffusion(Checkpoint::load(diffusion_path()));
  ld.freeze();
  torch::NoGradGuard no_grad;
  const auto prompt = ld.tokens->forward(torch::full({count}, kind, torch::kInt64));
  std::vector<std::vector<Image>> rows;
  if (lambda >= 1.0) {
    const int64_t latent = config_.image_size() / ld.config().autoencoder.downsampling;
    rows.push_back(to_images(ld.sample(prompt, latent, latent, {{}, seed})));
  } else {
    require_stage("synth", "sample");
    const auto m = degrade::DatasetManifest::load(web_manifest());
    const auto clean_recs = m.select(degrade::Role::kClean);
    if (static_cast<int>(clean_recs.size()) < count)
      throw ValidationError("sample: only " + std::to_string(clean_recs.size()) + " clean web images");
    const auto clean = load_images(m, {clean_recs.begin(), clean_recs.begin() + count});
    rows.push_back(to_images(clean));
    rows.push_back(to_images(ld.generate(clean, prompt, lambda, {{}, seed})));
  }
  fs::path out = out_path;
  if (out.empty()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "sample-%s-l%.2f-s%llu.png", prompt_kind.c_str(), lambda,
                  static_cast<unsigned long long>(seed));
    out = dir_ / "samples" / buf;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_png(contact_sheet(rows), out);
  return out;
}

}  // namespace dfir::pipeline
