#include "dfir/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dfir/core/error.hpp"

namespace dfir::eval {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const MetricRow& r) {
  j = {{"method", r.method},   {"params_m", r.params_m}, {"ssim", r.ssim},
       {"dataset", r.dataset}, {"seeds", r.seeds},       {"fingerprint", r.fingerprint}};
  if (std::isinf(r.psnr_db))
    j["psnr_db"] = "inf";
  else
    j["psnr_db"] = r.psnr_db;
  if (!r.note.empty()) j["note"] = r.note;
}

void from_json(const nlohmann::json& j, MetricRow& r) {
  r.method = j.at("method").get<std::string>();
  r.params_m = j.at("params_m").get<double>();
  r.psnr_db = j.at("psnr_db").is_string() ? INFINITY : j.at("psnr_db").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.dataset = j.value("dataset", "");
  r.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  r.fingerprint = j.value("fingerprint", "");
  r.note = j.value("note", "");
}

std::optional<ReferenceValue> published_reference(const std::string& method) {
  static const std::map<std::string, ReferenceValue> table = {
      {"teacher", {34.90, 0.966}}, {"data", {29.12, 0.883}}, {"m0", {28.69, 0.876}}, {"m1", {28.38, 0.879}},
      {"m2", {28.20, 0.862}},      {"m3", {29.08, 0.893}},   {"m4", {29.02, 0.888}}, {"m5", {29.60, 0.903}},
      {"d4ir", {30.03, 0.906}},
  };
  auto it = table.find(method);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string format_table(const std::vector<MetricRow>& rows, bool with_reference) {
  std::ostringstream os;
  os << "| Method | Params(M) | PSNR(dB) | SSIM | Seeds |";
  if (with_reference) os << " Reference PSNR/SSIM (not reproduced) |";
  os << "\n|---|---|---|---|---|";
  if (with_reference) os << "---|";
  os << "\n";
  for (const auto& r : rows) {
    std::string seeds;
    for (auto s : r.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    os << "| " << r.method << (r.note.empty() ? "" : " (" + r.note + ")") << " | " << fmt("%.3f", r.params_m) << " | "
       << (std::isinf(r.psnr_db) ? std::string("inf") : fmt("%.2f", r.psnr_db)) << " | " << fmt("%.3f", r.ssim)
       << " | " << (seeds.empty() ? "-" : seeds) << " |";
    if (with_reference) {
      const auto ref = published_reference(r.method);
      os << " " << (ref ? fmt("%.2f", ref->psnr_db) + " / " + fmt("%.3f", ref->ssim) : std::string("-")) << " |";
    }
    os << "\n";
  }
  return os.str();
}

void emit_report(const std::vector<MetricRow>& rows, const std::vector<SampleGrid>& grids, const fs::path& out_dir,
                 const std::string& title) {
  if (rows.empty()) throw ValidationError("emit_report: no metric rows");
  for (const auto& g : grids) {
    if (g.rows.empty()) throw ValidationError("emit_report: grid '" + g.name + "' has no rows");
    for (const auto& row : g.rows) {
      if (row.empty() || (!g.columns.empty() && row.size() != g.columns.size()))
        throw ValidationError("emit_report: grid '" + g.name + "' is missing images");
      for (const auto& im : row)
        if (im.empty() || !im.same_shape(g.rows.front().front()))
          throw ValidationError("emit_report: grid '" + g.name + "' has missing or mismatched images");
    }
  }

  fs::create_directories(out_dir);
  std::map<std::string, std::vector<MetricRow>> by_dataset;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!by_dataset.contains(r.dataset)) order.push_back(r.dataset);
    by_dataset[r.dataset].push_back(r);
  }

  std::ofstream md(out_dir / "results.md");
  if (!md) throw IoError("cannot write " + (out_dir / "results.md").string());
  md << "# " << title << "\n\n";
  md << "Reference values are published numbers from a full-scale setup, listed for orientation. "
        "They are not reproduced here.\n";
  for (const auto& ds : order) {
    md << "\n## " << (ds.empty() ? "results" : ds) << "\n\n" << format_table(by_dataset[ds]);
  }
  if (!grids.empty()) {
    md << "\n## Sample grids\n\n";
    for (const auto& g : grids) {
      md << "- `grids/" << g.name << ".png`";
      if (!g.columns.empty()) {
        md << ": ";
        for (std::size_t i = 0; i < g.columns.size(); ++i) md << (i ? " | " : "") << g.columns[i];
      }
      md << "\n";
    }
  }

  std::ofstream jl(out_dir / "results.jsonl");
  if (!jl) throw IoError("cannot write " + (out_dir / "results.jsonl").string());
  for (const auto& r : rows) jl << nlohmann::json(r).dump() << "\n";

  if (!grids.empty()) {
    fs::create_directories(out_dir / "grids");
    for (const auto& g : grids) write_png(contact_sheet(g.rows), out_dir / "grids" / (g.name + ".png"));
  }
}

}  // namespace dfir::eval
