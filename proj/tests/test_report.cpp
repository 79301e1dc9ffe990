#include <cmath>
#include <fstream>
#include <sstream>

#include "testing.hpp"
#include "dfir/core/error.hpp"
#include "dfir/eval/report.hpp"
#include "test_util.hpp"

using namespace dfir;
using namespace dfir::eval;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<MetricRow> ablation_rows() {
  std::vector<MetricRow> rows;
  int i = 0;
  for (const char* m : {"m0", "m1", "m2", "m3", "m4", "m5", "d4ir"})
    rows.push_back({m, 0.12, 25.0 + i++, 0.8, "original-test", {1, 2, 3}, "fp", ""});
  return rows;
}

}  // namespace

TEST_CASE("ablation table has the expected schema and reference column") {
  test::TempDir dir("report");
  emit_report(ablation_rows(), {}, dir.path());
  const auto md = slurp(dir / "results.md");
  CHECK(md.find("| Method | Params(M) | PSNR(dB) | SSIM | Seeds | Reference PSNR/SSIM (not reproduced) |") !=
        std::string::npos);
  CHECK(md.find("| d4ir | 0.120 | 31.00 | 0.800 | 1,2,3 | 30.03 / 0.906 |") != std::string::npos);
  CHECK(md.find("| m0 | 0.120 | 25.00 | 0.800 | 1,2,3 | 28.69 / 0.876 |") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "grids"));

  std::ifstream jl(dir / "results.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(jl, line)) {
    const auto row = nlohmann::json::parse(line).get<MetricRow>();
    CHECK(row.dataset == "original-test");
    ++n;
  }
  CHECK(n == 7);
}

TEST_CASE("infinite psnr round-trips as a sentinel") {
  MetricRow r{"teacher", 1.0, INFINITY, 1.0, "x", {}, "", ""};
  const nlohmann::json j = r;
  CHECK(j["psnr_db"] == "inf");
  CHECK(std::isinf(j.get<MetricRow>().psnr_db));
  CHECK(format_table({r}).find("| inf |") != std::string::npos);
  CHECK(published_reference("teacher")->psnr_db == 34.90);
  CHECK_FALSE(published_reference("unknown").has_value());
}

TEST_CASE("grids are written and validated") {
  test::TempDir dir("grids");
  const Image a = test::random_image(8, 8, 1);
  SampleGrid g{"rain", {"degraded", "student", "clean"}, {{a, a, a}, {a, a, a}}};
  emit_report(ablation_rows(), {g}, dir.path());
  const Image sheet = read_png(dir / "grids" / "rain.png");
  CHECK(sheet.width() > 3 * 8);
  CHECK(sheet.height() > 2 * 8);

  SampleGrid missing{"bad", {"degraded", "student", "clean"}, {{a, a}}};
  CHECK_THROWS_AS(emit_report(ablation_rows(), {missing}, dir.path()), ValidationError);
  SampleGrid mismatched{"bad", {}, {{a, test::random_image(4, 4, 2)}}};
  CHECK_THROWS_AS(emit_report(ablation_rows(), {mismatched}, dir.path()), ValidationError);
  CHECK_THROWS_AS(emit_report({}, {}, dir.path()), ValidationError);
}
