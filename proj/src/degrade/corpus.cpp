#include "dfir/degrade/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dfir/core/error.hpp"
#include "dfir/core/image.hpp"
#include "dfir/core/rng.hpp"
#include "dfir/degrade/apply.hpp"
#include "dfir/degrade/scene.hpp"

namespace dfir::degrade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSchema = "dfir.manifest/1";

std::string role_name(Role r) { return r == Role::kClean ? "clean" : "degraded"; }
std::string split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Role parse_role(const std::string& s) {
  if (s == "clean") return Role::kClean;
  if (s == "degraded") return Role::kDegraded;
  throw IntegrityError("manifest: unknown role '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw IntegrityError("manifest: unknown split '" + s + "'");
}

std::string indexed_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.png", i);
  return buf;
}

}  // namespace

void DatasetManifest::validate() const {
  std::map<std::int64_t, int> clean_by_pair;
  for (const auto& r : records) {
    if (r.image_path.empty()) throw IntegrityError("manifest: record with empty image_path");
    if (r.role == Role::kClean && r.pair_id) ++clean_by_pair[*r.pair_id];
  }
  for (const auto& r : records) {
    if (r.role != Role::kDegraded || !r.pair_id) continue;
    auto it = clean_by_pair.find(*r.pair_id);
    const int n = it == clean_by_pair.end() ? 0 : it->second;
    if (n != 1)
      throw IntegrityError("manifest: pair_id " + std::to_string(*r.pair_id) + " has " +
                           std::to_string(n) + " clean records, expected exactly 1");
  }
  if (!base_dir.empty()) {
    for (const auto& r : records)
      if (!fs::exists(base_dir / r.image_path))
        throw IntegrityError("manifest: unresolvable image " + r.image_path);
  }
}

bool DatasetManifest::paired() const {
  bool any = false;
  for (const auto& r : records) {
    if (r.role != Role::kDegraded) continue;
    any = true;
    if (!r.pair_id) return false;
  }
  return any;
}

std::vector<const ManifestRecord*> DatasetManifest::select(Role role, std::optional<Split> split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.role == role && (!split || r.split == *split)) out.push_back(&r);
  return out;
}

const ManifestRecord* DatasetManifest::partner(const ManifestRecord& degraded) const {
  if (!degraded.pair_id) return nullptr;
  for (const auto& r : records)
    if (r.role == Role::kClean && r.pair_id == degraded.pair_id) return &r;
  return nullptr;
}

std::string DatasetManifest::serialize() const {
  std::ostringstream os;
  json header = {{"type", "header"},
                 {"schema", kSchema},
                 {"corpus_seed", corpus_seed},
                 {"domain", domain},
                 {"fingerprint", fingerprint}};
  os << header.dump() << '\n';
  for (const auto& r : records) {
    json j = {{"type", "record"},
              {"image_path", r.image_path},
              {"role", role_name(r.role)},
              {"split", split_name(r.split)},
              {"source", r.source}};
    if (r.pair_id) j["pair_id"] = *r.pair_id;
    if (r.spec) j["spec"] = *r.spec;
    os << j.dump() << '\n';
  }
  return os.str();
}

void DatasetManifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << serialize();
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IntegrityError("manifest " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      if (j.value("schema", "") != kSchema)
        throw IntegrityError("manifest: unsupported schema '" + j.value("schema", "") + "'");
      m.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
      m.domain = j.at("domain").get<std::string>();
      m.fingerprint = j.value("fingerprint", "");
      have_header = true;
    } else if (type == "record") {
      ManifestRecord r;
      r.image_path = j.at("image_path").get<std::string>();
      r.role = parse_role(j.at("role").get<std::string>());
      r.split = parse_split(j.value("split", "train"));
      r.source = j.value("source", "");
      if (j.contains("pair_id")) r.pair_id = j.at("pair_id").get<std::int64_t>();
      if (j.contains("spec")) r.spec = j.at("spec").get<DegradationSpec>();
      m.records.push_back(std::move(r));
    } else {
      throw IntegrityError("manifest: unknown line type '" + type + "'");
    }
  }
  if (!have_header) throw IntegrityError("manifest " + path.string() + " has no header line");
  m.validate();
  return m;
}

void generate_scene_directory(const fs::path& dir, int count, int size, std::uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i)
    write_png(generate_scene(size, size, derive_seed(seed, {static_cast<std::uint64_t>(i)})),
              dir / ("scene_" + indexed_name(i)));
}

DatasetManifest build_corpus(const fs::path& clean_source, const DomainProfile& profile,
                             const CorpusOptions& options, const fs::path& out_dir) {
  profile.validate();
  if (options.n_images <= 0) throw ValidationError("build_corpus: n_images must be positive");
  if (options.test_fraction < 0.0 || options.test_fraction >= 1.0)
    throw ValidationError("build_corpus: test_fraction must be in [0, 1)");

  std::vector<fs::path> sources;
  if (fs::is_directory(clean_source))
    for (const auto& e : fs::directory_iterator(clean_source))
      if (e.is_regular_file() && e.path().extension() == ".png") sources.push_back(e.path());
  std::sort(sources.begin(), sources.end());
  if (static_cast<int>(sources.size()) < options.n_images)
    throw ValidationError("build_corpus: " + clean_source.string() + " holds " +
                          std::to_string(sources.size()) + " images, need " +
                          std::to_string(options.n_images));

  try {
    fs::create_directories(out_dir / "clean");
    fs::create_directories(out_dir / "degraded");
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("build_corpus: cannot create output directory: ") + e.what());
  }

  // Fisher-Yates over the sorted source list.
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(options.corpus_seed, {0}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

  DatasetManifest m;
  m.corpus_seed = options.corpus_seed;
  m.domain = profile.name;
  m.fingerprint = options.fingerprint;
  m.base_dir = out_dir;

  const auto degrade_one = [&](const Image& clean, int index) {
    const auto i = static_cast<std::uint64_t>(index);
    DegradationSpec spec = sample_spec(profile, derive_seed(options.corpus_seed, {1, i}));
    Image degraded = apply_degradation(clean, spec, derive_seed(options.corpus_seed, {2, i}));
    return std::pair{spec, degraded};
  };

  if (options.paired) {
    const int n = options.n_images;
    const int n_test = static_cast<int>(std::floor(n * options.test_fraction));
    for (int i = 0; i < n; ++i) {
      const fs::path& src = sources[order[i]];
      const Image clean = read_png(src);
      auto [spec, degraded] = degrade_one(clean, i);
      const std::string name = indexed_name(i);
      write_png(clean, out_dir / "clean" / name);
      write_png(degraded, out_dir / "degraded" / name);
      const Split split = i >= n - n_test ? Split::kTest : Split::kTrain;
      m.records.push_back({"clean/" + name, Role::kClean, i, std::nullopt, split, src.filename().string()});
      m.records.push_back({"degraded/" + name, Role::kDegraded, i, spec, split, src.filename().string()});
    }
  } else {
    const int n_clean = (options.n_images + 1) / 2;
    const int n_degraded = options.n_images - n_clean;
    for (int i = 0; i < n_clean; ++i) {
      const fs::path& src = sources[order[i]];
      const std::string name = indexed_name(i);
      write_png(read_png(src), out_dir / "clean" / name);
      m.records.push_back({"clean/" + name, Role::kClean, std::nullopt, std::nullopt, Split::kTrain,
                           src.filename().string()});
    }
    for (int i = 0; i < n_degraded; ++i) {
      const fs::path& src = sources[order[n_clean + i]];
      auto [spec, degraded] = degrade_one(read_png(src), i);
      const std::string name = indexed_name(i);
      write_png(degraded, out_dir / "degraded" / name);
      m.records.push_back({"degraded/" + name, Role::kDegraded, std::nullopt, spec, Split::kTrain,
                           src.filename().string()});
    }
  }
  m.validate();
  m.save(out_dir / "manifest.jsonl");
  return m;
}

}  // namespace dfir::degrade
