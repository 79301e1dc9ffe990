#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfir/core/image.hpp"
#include "json.hpp"

namespace dfir::eval {

struct MetricRow {
  std::string method;
  double params_m = 0.0;  // millions of parameters
  double psnr_db = 0.0;   // +inf for identical images
  double ssim = 0.0;
  std::string dataset;
  std::vector<std::uint64_t> seeds;
  std::string fingerprint;
  std::string note;
};

// PSNR +inf serializes as the string "inf".
void to_json(nlohmann::json& j, const MetricRow& row);
void from_json(const nlohmann::json& j, MetricRow& row);

struct ReferenceValue {
  double psnr_db;
  double ssim;
};

// Published numbers for a method name (teacher, data, m0..m5, d4ir) on the
// light-rain benchmark, shown next to measured rows for context only.
std::optional<ReferenceValue> published_reference(const std::string& method);

// One figure: rows of images, typically degraded | restorations... | clean.
struct SampleGrid {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Image>> rows;
};

// Writes results.md (one table per dataset), results.jsonl (one row per line)
// and grids/<name>.png. ValidationError on no rows or a grid with missing or
// mismatched images.
void emit_report(const std::vector<MetricRow>& rows, const std::vector<SampleGrid>& grids,
                 const std::filesystem::path& out_dir, const std::string& title = "Results");

std::string format_table(const std::vector<MetricRow>& rows, bool with_reference = true);

}  // namespace dfir::eval
