#include "dfir/pipeline/config.hpp"

#include <fstream>

#include "dfir/core/error.hpp"
#include "dfir/core/hash.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/distill/variant.hpp"

namespace dfir::pipeline {

using nlohmann::json;

namespace {

json smoke_document() {
  return {
      {"schema", kConfigSchema},
      {"preset", "smoke"},
      {"seed", 0},
      {"image_size", 32},
      {"deterministic_mode", true},
      {"data",
       {{"n_pretrain", 300},
        {"pretrain_copies", 3},
        {"pretrain_heldout", 30},
        {"pretrain_profile", "builtin:broad"},
        {"n_original", 300},
        {"original_profile", "builtin:original-mix"},
        {"test_fraction", 0.25},
        {"n_web", 300},
        {"web_profile", "builtin:web-mix"}}},
      {"autoencoder",
       {{"width", 32},
        {"latent_channels", 4},
        {"downsampling", 2},
        {"steps", 2000},
        {"batch_size", 16},
        {"lr", 1e-3},
        {"latent_penalty", 1e-4}}},
      {"diffusion",
       {{"unet_width", 32},
        {"prompt_dim", 64},
        {"pooled_context", true},
        {"timesteps", 1000},
        {"beta_start", 1e-4},
        {"beta_end", 0.02},
        {"ddim_steps", 20},
        {"steps", 10000},
        {"batch_size", 16},
        {"lr", 1e-3},
        {"null_token_prob", 0.1},
        {"ema_decay", 0.999},
        {"min_snr_gamma", 5.0}}},
      {"teacher", {{"base_width", 32}, {"depth", 4}, {"steps", 1500}, {"batch_size", 16}, {"lr", 1e-3}}},
      {"distill",
       {{"student_width", 16},
        {"student_depth", 4},
        {"encoder_width", 32},
        {"prompt_tokens", 1},
        {"queue_size", 1024},
        {"momentum", 0.999},
        {"momentum_encoder", true},
        {"crop", 16},
        {"temperature", 0.07},
        {"contrastive_form", "with_positive"},
        {"joint_epochs", 1},
        {"kd_epochs", 3},
        {"steps_per_epoch", 0},
        {"batch_size", 16},
        {"lr_student", 1e-3},
        {"lr_adapter", 1e-5},
        {"lr_halving_every", 15},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"gamma", 0.5},
        {"lambda", 0.5},
        {"ddim_form", "standard"},
        {"grad_steps", -1},
        {"cache_generated", false},
        {"eval_every_epochs", 0},
        {"variants", {"d4ir", "data"}}}},
      {"ablation", {{"variants", {"m0", "m1", "m2", "m3", "m4", "m5", "d4ir"}}}},
      {"replicates", 1},
      {"eval", {{"grid_images", 4}}},
  };
}

json desk_document() {
  json d = smoke_document();
  d["preset"] = "desk";
  d["image_size"] = 64;
  d["data"]["n_pretrain"] = 2000;
  d["data"]["pretrain_heldout"] = 100;
  d["data"]["n_original"] = 2000;
  d["data"]["test_fraction"] = 0.1;
  d["data"]["n_web"] = 2000;
  d["autoencoder"]["width"] = 64;
  d["autoencoder"]["downsampling"] = 4;
  d["autoencoder"]["steps"] = 8000;
  d["diffusion"]["unet_width"] = 64;
  d["diffusion"]["ddim_steps"] = 70;
  d["diffusion"]["steps"] = 30000;
  d["diffusion"]["lr"] = 5e-4;
  d["teacher"]["steps"] = 10000;
  d["distill"]["crop"] = 32;
  d["distill"]["joint_epochs"] = 5;
  d["distill"]["kd_epochs"] = 15;
  d["replicates"] = 3;
  d["eval"]["grid_images"] = 6;
  return d;
}

// Recursively overlays `src` on `dst`; every key in `src` must already exist in
// `dst` with a compatible type.
void overlay(json& dst, const json& src, const std::string& path) {
  if (!src.is_object()) throw ValidationError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!dst.contains(key)) throw ValidationError("config: unknown key '" + here + "'");
    json& slot = dst[key];
    if (slot.is_object()) {
      overlay(slot, value, here);
      continue;
    }
    const bool ok = (slot.is_boolean() && value.is_boolean()) || (slot.is_string() && value.is_string()) ||
                    (slot.is_array() && value.is_array()) ||
                    (slot.is_number_integer() && value.is_number_integer()) ||
                    (slot.is_number_float() && value.is_number());
    if (!ok) throw ValidationError("config: '" + here + "' has the wrong type (expected " + slot.type_name() + ")");
    slot = slot.is_number_float() ? json(value.get<double>()) : value;
  }
}

json& slot_for(json& doc, const std::string& dotted) {
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ValidationError("config: unknown key '" + dotted + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

}  // namespace

RunConfig RunConfig::preset(std::string_view name) {
  RunConfig c;
  if (name == "smoke") c.doc_ = smoke_document();
  else if (name == "desk") c.doc_ = desk_document();
  else throw ValidationError("config: unknown preset '" + std::string(name) + "' (known: smoke, desk)");
  return c;
}

std::vector<std::string> RunConfig::preset_names() { return {"smoke", "desk"}; }

RunConfig RunConfig::from_json(const json& overrides, std::string_view fallback_preset) {
  if (!overrides.is_object()) throw ValidationError("config: top level must be an object");
  if (!overrides.contains("schema")) throw ValidationError(std::string("config: missing 'schema' (expected ") + kConfigSchema + ")");
  if (overrides.at("schema") != kConfigSchema)
    throw ValidationError("config: unsupported schema " + overrides.at("schema").dump() + " (expected " + kConfigSchema + ")");
  std::string base(fallback_preset);
  if (overrides.contains("preset")) {
    if (!overrides.at("preset").is_string()) throw ValidationError("config: 'preset' must be a string");
    base = overrides.at("preset").get<std::string>();
  }
  RunConfig c = preset(base);
  overlay(c.doc_, overrides, "");
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::string_view fallback_preset) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, fallback_preset);
}

void RunConfig::set(const std::string& dotted_key, const json& value) {
  json& slot = slot_for(doc_, dotted_key);
  // Reuse the overlay type rules on a one-key object.
  json holder = {{dotted_key, slot}};
  overlay(holder, {{dotted_key, value}}, "");
  slot = holder[dotted_key];
}

void RunConfig::validate() const {
  const json& d = doc_;
  require(d.at("schema") == kConfigSchema, "bad schema tag");
  const int size = image_size();
  require(size >= 16 && size % 8 == 0, "image_size must be a multiple of 8, at least 16");

  const json& data = d.at("data");
  for (const char* k : {"n_pretrain", "n_original", "n_web", "pretrain_copies"})
    require(data.at(k).get<int>() >= 1, std::string("data.") + k + " must be positive");
  require(data.at("pretrain_heldout").get<int>() >= 1 &&
              data.at("pretrain_heldout").get<int>() < data.at("n_pretrain").get<int>(),
          "data.pretrain_heldout must be in [1, n_pretrain)");
  require(data.at("n_web").get<int>() >= 2, "data.n_web must be at least 2 (clean and degraded halves)");
  const double tf = data.at("test_fraction").get<double>();
  require(tf > 0.0 && tf < 1.0, "data.test_fraction must be in (0, 1)");
  require(static_cast<int>(data.at("n_original").get<int>() * tf) >= 1, "data.test_fraction leaves no test images");

  const json& ae = d.at("autoencoder");
  const int ds = ae.at("downsampling").get<int>();
  require(ds == 2 || ds == 4, "autoencoder.downsampling must be 2 or 4");
  require(size % (2 * ds) == 0, "image_size must give an even latent size");
  for (const char* k : {"width", "latent_channels", "steps", "batch_size"})
    require(ae.at(k).get<int>() >= 1, std::string("autoencoder.") + k + " must be positive");
  require(ae.at("lr").get<double>() > 0.0, "autoencoder.lr must be positive");
  require(ae.at("latent_penalty").get<double>() >= 0.0, "autoencoder.latent_penalty must be >= 0");

  const json& df = d.at("diffusion");
  require(df.at("unet_width").get<int>() >= 8 && df.at("unet_width").get<int>() % 8 == 0,
          "diffusion.unet_width must be a positive multiple of 8");
  require(df.at("prompt_dim").get<int>() >= 1, "diffusion.prompt_dim must be positive");
  const int T = df.at("timesteps").get<int>();
  require(T >= 2, "diffusion.timesteps must be at least 2");
  const int S = df.at("ddim_steps").get<int>();
  require(S >= 1 && S <= T, "diffusion.ddim_steps must be in [1, timesteps]");
  const double b0 = df.at("beta_start").get<double>(), b1 = df.at("beta_end").get<double>();
  require(b0 > 0.0 && b0 <= b1 && b1 < 1.0, "diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
  require(df.at("steps").get<int>() >= 1 && df.at("batch_size").get<int>() >= 1, "diffusion steps/batch must be positive");
  require(df.at("lr").get<double>() > 0.0, "diffusion.lr must be positive");
  const double pnull = df.at("null_token_prob").get<double>();
  require(pnull >= 0.0 && pnull < 1.0, "diffusion.null_token_prob must be in [0, 1)");
  const double ema = df.at("ema_decay").get<double>();
  require(ema >= 0.0 && ema < 1.0, "diffusion.ema_decay must be in [0, 1)");
  require(df.at("min_snr_gamma").get<double>() >= 0.0, "diffusion.min_snr_gamma must be >= 0");

  const json& t = d.at("teacher");
  require(t.at("base_width").get<int>() >= 2 && t.at("base_width").get<int>() % 2 == 0,
          "teacher.base_width must be even and >= 2");
  require(t.at("depth").get<int>() >= 0, "teacher.depth must be >= 0");
  require(t.at("steps").get<int>() >= 1 && t.at("batch_size").get<int>() >= 1, "teacher steps/batch must be positive");
  require(t.at("lr").get<double>() > 0.0, "teacher.lr must be positive");

  const json& s = d.at("distill");
  const double lambda = s.at("lambda").get<double>();
  require(lambda >= 0.0 && lambda <= 1.0, "distill.lambda must be in [0, 1], got " + std::to_string(lambda));
  require(s.at("gamma").get<double>() >= 0.0, "distill.gamma must be >= 0");
  require(s.at("temperature").get<double>() > 0.0, "distill.temperature must be > 0");
  const double m = s.at("momentum").get<double>();
  require(m >= 0.0 && m <= 1.0, "distill.momentum must be in [0, 1]");
  require(s.at("queue_size").get<int>() >= 1, "distill.queue_size must be positive");
  require(s.at("prompt_tokens").get<int>() >= 1, "distill.prompt_tokens must be positive");
  const int crop = s.at("crop").get<int>();
  require(crop >= 8 && crop <= size, "distill.crop must be in [8, image_size]");
  require(s.at("student_width").get<int>() >= 1 && s.at("student_depth").get<int>() >= 0, "bad student size");
  require(s.at("encoder_width").get<int>() >= 1, "distill.encoder_width must be positive");
  require(s.at("joint_epochs").get<int>() >= 0 && s.at("kd_epochs").get<int>() >= 0 &&
              s.at("joint_epochs").get<int>() + s.at("kd_epochs").get<int>() >= 1,
          "distill epochs must be >= 0 with at least one in total");
  require(s.at("steps_per_epoch").get<int>() >= 0, "distill.steps_per_epoch must be >= 0");
  require(s.at("batch_size").get<int>() >= 1, "distill.batch_size must be positive");
  require(s.at("lr_student").get<double>() > 0.0 && s.at("lr_adapter").get<double>() >= 0.0, "bad distill learning rates");
  require(s.at("lr_halving_every").get<int>() >= 1, "distill.lr_halving_every must be positive");
  for (const char* k : {"beta1", "beta2"}) {
    const double b = s.at(k).get<double>();
    require(b >= 0.0 && b < 1.0, std::string("distill.") + k + " must be in [0, 1)");
  }
  const auto form = s.at("ddim_form").get<std::string>();
  require(form == "standard" || form == "literal", "distill.ddim_form must be 'standard' or 'literal'");
  const auto cform = s.at("contrastive_form").get<std::string>();
  require(cform == "with_positive" || cform == "negatives_only",
          "distill.contrastive_form must be 'with_positive' or 'negatives_only'");
  require(s.at("grad_steps").get<int>() >= -1, "distill.grad_steps must be >= -1");
  require(s.at("eval_every_epochs").get<int>() >= 0, "distill.eval_every_epochs must be >= 0");
  for (const auto* key : {"distill", "ablation"}) {
    const json& list = d.at(key).at("variants");
    require(!list.empty(), std::string(key) + ".variants must not be empty");
    for (const auto& v : list) {
      require(v.is_string(), std::string(key) + ".variants must hold strings");
      distill::variant_by_name(v.get<std::string>());
    }
  }
  require(d.at("replicates").get<int>() >= 1, "replicates must be positive");
  require(d.at("eval").at("grid_images").get<int>() >= 1, "eval.grid_images must be positive");
}

std::string RunConfig::fingerprint() const { return sha256_hex(doc_.dump()); }

std::string RunConfig::stage_fingerprint(std::string_view stage) const {
  json basis = {{"stage", stage}, {"schema", kConfigSchema}};
  const auto base = [&] {
    basis["seed"] = doc_.at("seed");
    basis["image_size"] = doc_.at("image_size");
  };
  if (stage == "synth") {
    base();
    basis["data"] = doc_.at("data");
  } else if (stage == "pretrain-ae") {
    basis["autoencoder"] = doc_.at("autoencoder");
    basis["upstream"] = stage_fingerprint("synth");
  } else if (stage == "pretrain-diffusion") {
    basis["diffusion"] = doc_.at("diffusion");
    basis["upstream"] = stage_fingerprint("pretrain-ae");
  } else if (stage == "pretrain-teacher") {
    basis["teacher"] = doc_.at("teacher");
    basis["upstream"] = stage_fingerprint("synth");
  } else if (stage == "distill") {
    json s = doc_.at("distill");
    s.erase("variants");  // which variants run does not change any single run
    basis["distill"] = s;
    basis["upstream"] = {stage_fingerprint("pretrain-teacher"), stage_fingerprint("pretrain-diffusion")};
  } else if (stage == "ablate") {
    basis["ablation"] = doc_.at("ablation");
    basis["replicates"] = doc_.at("replicates");
    basis["upstream"] = stage_fingerprint("distill");
  } else if (stage == "eval") {
    basis["eval"] = doc_.at("eval");
    basis["variants"] = doc_.at("distill").at("variants");
    basis["replicates"] = doc_.at("replicates");
    basis["upstream"] = stage_fingerprint("distill");
  } else if (stage == "report") {
    basis["upstream"] = {stage_fingerprint("eval"), stage_fingerprint("ablate")};
  } else {
    throw ValidationError("unknown stage '" + std::string(stage) + "'");
  }
  return sha256_hex(basis.dump()).substr(0, 16);
}

DataConfig RunConfig::data() const {
  const json& d = doc_.at("data");
  DataConfig c;
  c.n_pretrain = d.at("n_pretrain");
  c.pretrain_copies = d.at("pretrain_copies");
  c.pretrain_heldout = d.at("pretrain_heldout");
  c.pretrain_profile = d.at("pretrain_profile");
  c.n_original = d.at("n_original");
  c.original_profile = d.at("original_profile");
  c.test_fraction = d.at("test_fraction");
  c.n_web = d.at("n_web");
  c.web_profile = d.at("web_profile");
  return c;
}

diffusion::AutoencoderTrainConfig RunConfig::autoencoder() const {
  const json& a = doc_.at("autoencoder");
  diffusion::AutoencoderTrainConfig c;
  c.net.width = a.at("width");
  c.net.latent_channels = a.at("latent_channels");
  c.net.downsampling = a.at("downsampling");
  c.steps = a.at("steps");
  c.batch_size = a.at("batch_size");
  c.lr = a.at("lr");
  c.latent_penalty = a.at("latent_penalty");
  c.seed = derive_seed(seed(), {101});
  return c;
}

diffusion::DiffusionTrainConfig RunConfig::diffusion() const {
  const json& d = doc_.at("diffusion");
  diffusion::DiffusionTrainConfig c;
  c.model.autoencoder = autoencoder().net;
  c.model.unet.latent_channels = c.model.autoencoder.latent_channels;
  c.model.unet.width = d.at("unet_width");
  c.model.unet.context_dim = d.at("prompt_dim");
  c.model.unet.pooled_context = d.at("pooled_context");
  c.model.timesteps = d.at("timesteps");
  c.model.beta_start = d.at("beta_start");
  c.model.beta_end = d.at("beta_end");
  c.model.ddim_steps = d.at("ddim_steps");
  c.steps = d.at("steps");
  c.batch_size = d.at("batch_size");
  c.lr = d.at("lr");
  c.null_token_prob = d.at("null_token_prob");
  c.ema_decay = d.at("ema_decay");
  c.min_snr_gamma = d.at("min_snr_gamma");
  c.seed = derive_seed(seed(), {102});
  return c;
}

nets::TeacherConfig RunConfig::teacher() const {
  const json& t = doc_.at("teacher");
  nets::TeacherConfig c;
  c.net.base_width = t.at("base_width");
  c.net.depth = t.at("depth");
  c.train.steps = t.at("steps");
  c.train.batch_size = t.at("batch_size");
  c.train.lr = t.at("lr");
  c.train.seed = derive_seed(seed(), {103});
  return c;
}

distill::DistillConfig RunConfig::distill(std::uint64_t student_seed) const {
  const json& s = doc_.at("distill");
  distill::DistillConfig c;
  c.student = {s.at("student_width").get<int>(), s.at("student_depth").get<int>()};
  c.encoder.width = s.at("encoder_width");
  c.encoder.embed_dim = doc_.at("diffusion").at("prompt_dim");
  c.encoder.tokens = s.at("prompt_tokens");
  c.contrast.temperature = s.at("temperature");
  c.contrast.queue_size = s.at("queue_size");
  c.contrast.momentum = s.at("momentum");
  c.contrast.momentum_encoder = s.at("momentum_encoder");
  c.contrast.crop = s.at("crop");
  c.contrast.form = s.at("contrastive_form") == "negatives_only" ? prompt::DenominatorForm::kNegativesOnly
                                                                 : prompt::DenominatorForm::kWithPositive;
  c.joint_epochs = s.at("joint_epochs");
  c.kd_epochs = s.at("kd_epochs");
  c.steps_per_epoch = s.at("steps_per_epoch");
  c.batch_size = s.at("batch_size");
  c.lr_student = s.at("lr_student");
  c.lr_adapter = s.at("lr_adapter");
  c.lr_halving_every = s.at("lr_halving_every");
  c.beta1 = s.at("beta1");
  c.beta2 = s.at("beta2");
  c.gamma = s.at("gamma");
  c.lambda = s.at("lambda");
  c.ddim_form = s.at("ddim_form") == "literal" ? diffusion::DdimForm::kLiteral : diffusion::DdimForm::kStandard;
  c.grad_steps = s.at("grad_steps");
  c.cache_generated = s.at("cache_generated");
  c.eval_every_epochs = s.at("eval_every_epochs");
  c.seed = student_seed;
  return c;
}

std::vector<std::string> RunConfig::distill_variants() const {
  return doc_.at("distill").at("variants").get<std::vector<std::string>>();
}

std::vector<std::string> RunConfig::ablation_variants() const {
  return doc_.at("ablation").at("variants").get<std::vector<std::string>>();
}

int RunConfig::replicates() const { return doc_.at("replicates").get<int>(); }
int RunConfig::grid_images() const { return doc_.at("eval").at("grid_images").get<int>(); }

std::uint64_t RunConfig::student_seed(int replicate) const {
  return derive_seed(seed(), {104, static_cast<std::uint64_t>(replicate)});
}

}  // namespace dfir::pipeline
