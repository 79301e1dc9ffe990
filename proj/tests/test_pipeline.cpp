#include <fstream>

#include "testing.hpp"
#include "dfir/core/checkpoint.hpp"
#include "dfir/core/error.hpp"
#include "dfir/pipeline/config.hpp"
#include "dfir/pipeline/pipeline.hpp"
#include "test_util.hpp"

using namespace dfir;
using namespace dfir::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_overrides() {
  return {{"schema", kConfigSchema},
          {"image_size", 16},
          {"data",
           {{"n_pretrain", 12},
            {"pretrain_copies", 1},
            {"pretrain_heldout", 4},
            {"n_original", 12},
            {"test_fraction", 0.25},
            {"n_web", 12}}},
          {"autoencoder", {{"width", 4}, {"steps", 3}, {"batch_size", 4}}},
          {"diffusion", {{"unet_width", 8}, {"prompt_dim", 8}, {"ddim_steps", 4}, {"steps", 3}, {"batch_size", 4}}},
          {"teacher", {{"base_width", 4}, {"depth", 1}, {"steps", 3}, {"batch_size", 4}}},
          {"distill",
           {{"student_width", 2},
            {"student_depth", 1},
            {"encoder_width", 4},
            {"queue_size", 16},
            {"crop", 8},
            {"joint_epochs", 1},
            {"kd_epochs", 1},
            {"steps_per_epoch", 2},
            {"batch_size", 4}}},
          {"ablation", {{"variants", {"m0", "d4ir"}}}},
          {"eval", {{"grid_images", 2}}}};
}

RunConfig tiny_config() { return RunConfig::from_json(tiny_overrides()); }

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("presets validate and carry the documented defaults") {
  for (const auto& name : RunConfig::preset_names()) {
    const auto c = RunConfig::preset(name);
    CHECK_NOTHROW(c.validate());
    const auto d = c.distill(0);
    CHECK(d.lambda == 0.5);
    CHECK(d.gamma == 0.5);
    CHECK(d.contrast.temperature == 0.07);
    CHECK(d.lr_student == 1e-3);
    CHECK(d.lr_adapter == 1e-5);
    CHECK(d.lr_halving_every == 15);
    CHECK(d.beta1 == 0.9);
    CHECK(d.beta2 == 0.999);
    CHECK(c.diffusion().model.timesteps == 1000);
  }
  const auto desk = RunConfig::preset("desk");
  CHECK(desk.image_size() == 64);
  CHECK(desk.diffusion().model.ddim_steps == 70);
  CHECK(desk.distill(0).joint_epochs == 5);
  CHECK(desk.distill(0).kd_epochs == 15);
  CHECK(desk.replicates() == 3);
  CHECK_THROWS_AS(RunConfig::preset("huge"), ValidationError);
}

TEST_CASE("config loading is strict") {
  CHECK_NOTHROW(tiny_config());
  json j = tiny_overrides();
  j["distill"]["lamda"] = 0.5;
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["extra"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["distill"]["lambda"] = "half";
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["seed"] = 1.5;
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j.erase("schema");
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["schema"] = "dfir.config/0";
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["distill"]["lambda"] = 1.3;
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);
  j = tiny_overrides();
  j["distill"]["variants"] = {"m9"};
  CHECK_THROWS_AS(RunConfig::from_json(j), ValidationError);

  // Integer literals are accepted for float keys.
  j = tiny_overrides();
  j["distill"]["gamma"] = 1;
  CHECK(RunConfig::from_json(j).distill(0).gamma == 1.0);

  auto c = tiny_config();
  c.set("distill.lambda", 0.25);
  CHECK(c.distill(0).lambda == 0.25);
  c.set("distill.lambda", 1.3);
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(c.set("distill.nope", 1), ValidationError);

  test::TempDir dir("cfg");
  std::ofstream(dir / "c.json") << tiny_overrides().dump();
  CHECK(RunConfig::load(dir / "c.json").fingerprint() == tiny_config().fingerprint());
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ValidationError);
}

TEST_CASE("stage fingerprints follow the dependency graph") {
  const auto base = tiny_config();
  CHECK(base.fingerprint() == tiny_config().fingerprint());
  auto edited = base;
  edited.set("distill.lambda", 0.25);
  for (const char* s : {"synth", "pretrain-ae", "pretrain-diffusion", "pretrain-teacher"})
    CHECK(edited.stage_fingerprint(s) == base.stage_fingerprint(s));
  for (const char* s : {"distill", "ablate", "eval", "report"})
    CHECK(edited.stage_fingerprint(s) != base.stage_fingerprint(s));

  auto teacher_only = base;
  teacher_only.set("teacher.steps", 4);
  CHECK(teacher_only.stage_fingerprint("pretrain-diffusion") == base.stage_fingerprint("pretrain-diffusion"));
  CHECK(teacher_only.stage_fingerprint("pretrain-teacher") != base.stage_fingerprint("pretrain-teacher"));
  CHECK(teacher_only.stage_fingerprint("distill") != base.stage_fingerprint("distill"));

  auto reseeded = base;
  reseeded.set("seed", 7);
  for (const auto& s : stage_names()) CHECK(reseeded.stage_fingerprint(s) != base.stage_fingerprint(s));
  CHECK_THROWS_AS(base.stage_fingerprint("bake"), ValidationError);
}

TEST_CASE("one pipeline per run directory") {
  test::TempDir dir("lock");
  {
    Pipeline a(tiny_config(), dir.path());
    CHECK_THROWS_AS(Pipeline(tiny_config(), dir.path()), Error);
  }
  CHECK_NOTHROW(Pipeline(tiny_config(), dir.path()));
}

TEST_CASE("stages refuse to run without their upstream artifacts") {
  test::TempDir dir("upstream");
  Pipeline p(tiny_config(), dir.path());
  try {
    p.pretrain_diffusion();
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(std::string(e.what()).find("dfir pretrain-ae") != std::string::npos);
  }
  CHECK_THROWS_AS(p.pretrain_teacher(), MissingArtifactError);
  CHECK_THROWS_AS(p.distill({"data"}), MissingArtifactError);
  CHECK_THROWS_AS(p.report(), MissingArtifactError);
  CHECK_THROWS_AS(p.sample(1.0, "rain", 2, 0), MissingArtifactError);
}

TEST_CASE("tiny end-to-end run is complete, idempotent and resumable") {
  test::TempDir dir("e2e");
  const fs::path run = dir / "run";
  {
    Pipeline p(tiny_config(), run);
    const auto results = p.run();
    REQUIRE(results.size() == 8);
    for (const auto& r : results) CHECK_FALSE(r.up_to_date);
    CHECK(results[1].training_steps == 3);
    CHECK(results[4].training_steps == 8);  // d4ir and data, 4 steps each
    CHECK(results[5].training_steps == 4);  // m0 only; d4ir is reused
    for (const char* f : {"report/results.md", "report/results.jsonl", "report/grids/restorations.png",
                          "report/grids/generation.png", "config.json"})
      CHECK(fs::exists(run / f));

    const auto log = read_jsonl(p.student_log_path("d4ir", 0));
    REQUIRE(log.size() >= 4);
    for (const char* k : {"step", "epoch", "loss_kd", "loss_cl", "gamma", "lr"}) CHECK(log[0].contains(k));
    CHECK(log[0]["gamma"] == 0.5);
    CHECK(log[3]["gamma"] == 0.0);

    const auto rows = read_jsonl(run / "report" / "results.jsonl");
    std::vector<std::string> methods;
    for (const auto& r : rows) methods.push_back(r["method"]);
    for (const char* m : {"input", "teacher", "d4ir", "data", "m0"})
      CHECK(std::find(methods.begin(), methods.end(), m) != methods.end());
  }
  {
    Pipeline again(tiny_config(), run);
    for (const auto& r : again.run()) {
      CHECK(r.up_to_date);
      CHECK(r.training_steps == 0);
    }
  }
  {
    auto edited = tiny_config();
    edited.set("distill.lambda", 0.25);
    Pipeline p(edited, run);
    CHECK(p.synth().up_to_date);
    CHECK(p.pretrain_diffusion().up_to_date);
    CHECK(p.pretrain_teacher().up_to_date);
    const auto d = p.distill({"d4ir"});
    CHECK_FALSE(d.up_to_date);
    CHECK(d.training_steps == 4);
  }
  {
    Pipeline forced(tiny_config(), run, {.force = true});
    const auto r = forced.pretrain_teacher();
    CHECK_FALSE(r.up_to_date);
    CHECK(r.training_steps == 3);
  }

  SUBCASE("split distillation equals an uninterrupted run") {
    const fs::path split = dir / "split";
    fs::copy(run, split, fs::copy_options::recursive);
    fs::remove(split / ".lock");
    Pipeline whole(tiny_config(), run, {.force = true});
    whole.distill({"d4ir"});
    Pipeline parts(tiny_config(), split);
    fs::remove(parts.student_path("d4ir", 0));
    CHECK(parts.distill({"d4ir"}, 1).training_steps == 1);
    CHECK(parts.distill({"d4ir"}, 1).up_to_date);
    CHECK(parts.distill({"d4ir"}).training_steps == 3);
    const auto a = Checkpoint::load(whole.student_path("d4ir", 0));
    const auto b = Checkpoint::load(parts.student_path("d4ir", 0));
    CHECK(a.meta["loss_trace"] == b.meta["loss_trace"]);
    for (const auto& [name, t] : a.tensors) CHECK(torch::equal(t, b.at(name)));
  }

  SUBCASE("evaluation refuses mixed lineages unless allowed") {
    auto other_cfg = tiny_config();
    other_cfg.set("seed", 5);
    const fs::path other = dir / "other";
    Pipeline o(other_cfg, other);
    o.synth();
    o.pretrain_teacher();
    Pipeline p(tiny_config(), run);
    const std::vector<fs::path> ckpts = {p.teacher_path(), o.teacher_path()};
    CHECK_THROWS_AS(evaluate_checkpoints(ckpts, p.original_manifest(), false), IntegrityError);
    const auto rows = evaluate_checkpoints(ckpts, p.original_manifest(), true);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].note.empty());
    CHECK(rows[1].note == "mixed fingerprint");
  }

  SUBCASE("sampling writes contact sheets") {
    Pipeline p(tiny_config(), run);
    CHECK(fs::exists(p.sample(1.0, "rain", 3, 0)));
    CHECK(fs::exists(p.sample(0.5, "none", 2, 0, dir / "s.png")));
    CHECK_THROWS_AS(p.sample(1.3, "rain", 2, 0), ValidationError);
    CHECK_THROWS_AS(p.sample(0.5, "fog", 2, 0), ValidationError);
  }
}

TEST_CASE("two fresh runs with the same seed report identical numbers") {
  test::TempDir dir("twice");
  std::vector<std::string> reports;
  for (const char* name : {"a", "b"}) {
    Pipeline p(tiny_config(), dir / name);
    p.run();
    std::ifstream in(p.report_dir() / "results.jsonl");
    reports.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  CHECK_FALSE(reports[0].empty());
  CHECK(reports[0] == reports[1]);
}
