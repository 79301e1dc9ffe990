#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfir/degrade/spec.hpp"

namespace dfir::degrade {

enum class Role { kClean, kDegraded };
enum class Split { kTrain, kTest };

struct ManifestRecord {
  std::string image_path;  // relative to the manifest's directory
  Role role = Role::kClean;
  std::optional<std::int64_t> pair_id;
  std::optional<DegradationSpec> spec;
  Split split = Split::kTrain;
  std::string source;  // clean source file the record was derived from
};

// Line-delimited JSON: one header line
//   {"type":"header","schema":"dfir.manifest/1","corpus_seed":..,"domain":..,"fingerprint":..}
// followed by one {"type":"record",...} line per image.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t corpus_seed = 0;
  std::string domain;
  std::string fingerprint;
  std::filesystem::path base_dir;  // not serialized; set by load()

  void validate() const;
  bool paired() const;
  std::vector<const ManifestRecord*> select(Role role, std::optional<Split> split = {}) const;
  // Clean partner of a degraded record, or nullptr.
  const ManifestRecord* partner(const ManifestRecord& degraded) const;
  std::filesystem::path resolve(const ManifestRecord& r) const { return base_dir / r.image_path; }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

// Writes `count` procedural scenes as PNGs named scene_00000.png, ... into dir.
void generate_scene_directory(const std::filesystem::path& dir, int count, int size,
                              std::uint64_t seed);

struct CorpusOptions {
  bool paired = true;
  int n_images = 0;
  std::uint64_t corpus_seed = 0;
  double test_fraction = 0.0;  // paired mode only
  std::string fingerprint;
};

// Paired mode: n clean/degraded pairs sharing pair_id. Unpaired mode: the
// shuffled source is split into disjoint clean and degraded pools (ceil(n/2)
// and floor(n/2) images), with no pair links.
DatasetManifest build_corpus(const std::filesystem::path& clean_source, const DomainProfile& profile,
                             const CorpusOptions& options, const std::filesystem::path& out_dir);

}  // namespace dfir::degrade
