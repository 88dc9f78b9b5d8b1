#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rulgp/config.hpp"
#include "support.hpp"

using namespace rulgp;
using rulgp::test::error_kind;

TEST_CASE("every documented key is accepted") {
  RunConfig c;
  const std::map<std::string, std::string> sample = {
      {"out", "o"},          {"manifest", "m.txt"},   {"chemistry", "NCM"}, {"feature-set", "stats"},
      {"study", "truncation"}, {"reference", "50"},   {"truncate", "8"},    {"counts", "6,full"},
      {"starts", "1,100"},   {"train-stride", "3"},   {"test-cycle", "400"}, {"window", "60"},
      {"upper", "800"},      {"lower", "200"},        {"include-ncm-nca", "true"}, {"seed", "11"},
      {"restarts", "2"},     {"plots", "yes"},        {"cells", "4"},       {"conditions", "2"},
      {"preset", "lifetime-classes"}, {"noise", "0.001"}, {"spread", "0.2"}, {"model", "x.txt"},
      {"predictions", "p.csv"}, {"class-predictions", "c.csv"}, {"threads", "2"}};
  for (const auto& key : run_config_keys()) {
    REQUIRE(sample.count(key) == 1);
    CHECK_NOTHROW(c.set(key, sample.at(key)));
  }
  CHECK(c.chemistry == Chemistry::NCM);
  CHECK(c.feature_set == FeatureSet::STATS);
  CHECK(c.truncation_counts == std::vector<std::size_t>{6, 0});
  CHECK(c.start_cycles == std::vector<int>{1, 100});
  CHECK(c.policy()->upper_at_soh1 == 800.0);
  CHECK(c.rul_config().reference_cycle == 50);
  CHECK(c.rul_config().gpr.restarts == 2);
  CHECK(c.class_config().window_cycles == 60);
  CHECK(c.class_config().include_ncm_nca);
}

TEST_CASE("bad values are usage errors") {
  RunConfig c;
  CHECK(error_kind([&] { c.set("nonsense", "1"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("seed", "abc"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("restarts", "0"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("plots", "maybe"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("chemistry", "LFP"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("study", "table-iv"); }) == "UsageError");
  CHECK(error_kind([&] { c.set("spread", "1.5"); }) == "UsageError");
  c.set("upper", "450");
  CHECK(error_kind([&] { c.policy(); }) == "UsageError");
  c.set("lower", "500");
  CHECK(error_kind([&] { c.policy(); }) == "InvalidThresholds");
}

TEST_CASE("config file is applied and later settings override it") {
  const auto path = std::filesystem::temp_directory_path() / "rulgp_test_config.txt";
  {
    std::ofstream out(path);
    out << "# run file\nseed = 3\nfeature-set = ecm\nout = from_file\n";
  }
  RunConfig c;
  c.out_dir = "from_env";
  c.load_file(path);
  CHECK(c.seed == 3);
  CHECK(c.out_dir == "from_file");
  c.set("feature-set", "novel-pred");
  CHECK(c.feature_set == FeatureSet::NOVEL_PRED);
  CHECK(c.manifest_path() == std::filesystem::path("from_file") / "manifest.txt");
  std::filesystem::remove(path);
}

TEST_CASE("to_map is complete and stable") {
  RunConfig a, b;
  CHECK(a.to_map() == b.to_map());
  CHECK(a.to_map().count("seed") == 1);
  CHECK(a.to_map().at("truncate") == "full");
  b.set("seed", "8");
  CHECK(a.to_map() != b.to_map());
}
