#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rulgp/report.hpp"

using namespace rulgp;

namespace {

ExperimentReport sample_report() {
  ExperimentReport r;
  r.kind = "rul";
  r.config = {{"feature_set", "NOVEL_PRED"}, {"seed", "7"}};
  const char* cells[] = {"a", "a", "b", "c"};
  const char* conds[] = {"CY25", "CY25", "CY25", "CY45"};
  const double rul[] = {100, 90, 50, 10};
  const double hat[] = {110, 80.5, 47.25, 12.125};
  for (int i = 0; i < 4; ++i) {
    RulPredictionRow p;
    p.feature_set = "NOVEL_PRED";
    p.chemistry = "NCA";
    p.condition = conds[i];
    p.cell_id = cells[i];
    p.cycle = 10 + i;
    p.soh = 0.95 - 0.01 * i;
    p.eol = 400 + i;
    p.rul = rul[i];
    p.predicted = hat[i];
    p.predicted_sd = 0.1 * (i + 1) / 3.0;
    r.predictions.push_back(p);
  }
  r.metrics = rul_metrics(r.predictions);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("fingerprint: FNV-1a over sorted key=value lines") {
  // FNV-1a 64 of the empty string is the offset basis.
  CHECK(fingerprint_of({}) == "cbf29ce484222325");
  const auto a = fingerprint_of({{"a", "1"}, {"b", "2"}});
  CHECK(a.size() == 16);
  CHECK(a != fingerprint_of({{"a", "1"}, {"b", "3"}}));
  CHECK(header_line("00ff") == "# rulgp 0.1.0 fingerprint=00ff");
}

TEST_CASE("every CSV starts with the fingerprint header and config comments") {
  const auto r = sample_report();
  std::ostringstream out;
  write_rul_metrics_csv(out, r);
  const auto lines = lines_of(out.str());
  CHECK(lines[0] == header_line(r.fingerprint()));
  CHECK(lines[1] == "# kind = rul");
  CHECK(lines[2] == "# feature_set = NOVEL_PRED");
}

TEST_CASE("predictions round-trip and metrics recompute exactly") {
  const auto r = sample_report();
  std::stringstream s;
  write_rul_predictions_csv(s, r);
  const auto back = read_rul_predictions_csv(s);
  REQUIRE(back.size() == r.predictions.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].predicted == r.predictions[i].predicted);
    CHECK(back[i].predicted_sd == r.predictions[i].predicted_sd);
    CHECK(back[i].cell_id == r.predictions[i].cell_id);
  }
  const auto m = rul_metrics(back);
  REQUIRE(m.size() == r.metrics.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m[i].rmse == r.metrics[i].rmse);
    CHECK(m[i].mape == r.metrics[i].mape);
  }
}

TEST_CASE("Table II layout: one row per chemistry and condition") {
  const auto r = sample_report();
  std::ostringstream out;
  write_table_ii_csv(out, r);
  const auto text = out.str();
  CHECK(text.find("chemistry,condition,rmse_ECM,rmse_STATS,rmse_BENCHMARK,rmse_NOVEL_PRED,mape_ECM") !=
        std::string::npos);
  CHECK(text.find("\nNCA,ALL,") != std::string::npos);
  CHECK(text.find("\nNCA,CY25,") != std::string::npos);
  CHECK(text.find("\nNCA,CY45,") != std::string::npos);
}

TEST_CASE("truncation table converts sample counts to minutes") {
  auto r = sample_report();
  for (auto& m : r.metrics) m.truncation = 6;
  std::ostringstream out;
  write_truncation_csv(out, r, {{"NCA", 120.0}});
  CHECK(out.str().find(",6,12,") != std::string::npos);
}

TEST_CASE("class predictions round-trip") {
  ExperimentReport r;
  r.kind = "classification";
  ClassPredictionRow p;
  p.feature_set = "NOVEL_CLASS";
  p.chemistry = "NCA";
  p.condition = "X";
  p.cell_id = "c1";
  p.cycle = 500;
  p.soh = 0.9;
  p.rul = 120;
  p.truth = LifetimeLabel::Short;
  p.predicted = LifetimeLabel::Medium;
  p.probability = 0.625;
  p.stage1_long = 0.25;
  r.class_predictions = {p};
  std::stringstream s;
  write_class_predictions_csv(s, r);
  const auto back = read_class_predictions_csv(s);
  REQUIRE(back.size() == 1);
  CHECK(back[0].truth == LifetimeLabel::Short);
  CHECK(back[0].predicted == LifetimeLabel::Medium);
  CHECK(back[0].probability == 0.625);
  CHECK(class_accuracy(back).front().accuracy == 0.0);
}

TEST_CASE("write_report writes tables, optional plots and a summary") {
  const auto dir = std::filesystem::temp_directory_path() / "rulgp_test_report";
  std::filesystem::remove_all(dir);
  const auto r = sample_report();
  auto files = write_report(dir, r);
  CHECK(std::filesystem::exists(dir / "predictions.csv"));
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "summary.txt"));
  CHECK_FALSE(std::filesystem::exists(dir / "rul_scatter.svg"));
  ReportOptions opt;
  opt.plots = true;
  files = write_report(dir, r, opt);
  REQUIRE(std::filesystem::exists(dir / "rul_scatter.svg"));
  std::ifstream svg(dir / "rul_scatter.svg");
  std::string first;
  std::getline(svg, first);
  CHECK(first.find(r.fingerprint()) != std::string::npos);
  for (const auto& f : files) {
    if (f.extension() != ".csv" && f.extension() != ".txt") continue;
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    CHECK(line == header_line(r.fingerprint()));
  }
  std::filesystem::remove_all(dir);
}
