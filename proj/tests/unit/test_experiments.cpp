#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flashback/config_io.hpp"
#include "flashback/experiments.hpp"

using namespace flashback;
using namespace flashback::experiments;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("flashback_test_" + name);
  fs::remove_all(dir);
  return dir;
}

SimConfig short_base(const ExperimentPreset& p, std::int64_t rounds) {
  SimConfig c = preset_base(p);
  c.rounds = rounds;
  return c;
}

}  // namespace

TEST_CASE("preset catalog") {
  CHECK(preset_names().size() == 8);
  for (const auto& n : preset_names()) {
    CHECK(to_string(parse_preset_name(n)) == n);
    const auto p = make_preset(parse_preset_name(n));
    CHECK(p.replications == 10);
    CHECK(p.seeds == default_seeds());
    CHECK_FALSE(p.points.empty());
    CHECK_NOTHROW(validate_preset(p, preset_base(p)));
  }
  CHECK_THROWS_AS(parse_preset_name("nope"), std::invalid_argument);

  const auto bc = make_preset(PresetName::bid_count_sweep);
  REQUIRE(bc.points.size() == 20);
  CHECK(bc.points.front().label == "1");
  CHECK(bc.points.back().label == "20");

  const auto ttl = make_preset(PresetName::ttl_sweep);
  CHECK(ttl.points.size() == 7);

  const auto is = make_preset(PresetName::initial_score_sweep);
  CHECK(is.points.size() == 9);
  CHECK(preset_base(is).initial_knowledge_length == 200);
  SimConfig c = preset_base(is);
  apply_overrides(c, is.points.front().overrides);
  CHECK(c.initial_scores == std::vector<double>{16.0, 1.0});

  const SimConfig zb = preset_base(make_preset(PresetName::zero_bid_rate));
  CHECK(zb.fixed_r1 == 0.0);
  CHECK(zb.uniform_routing);
  const SimConfig mb = preset_base(make_preset(PresetName::multi_builder));
  CHECK(mb.builder_count() == 3);
}

TEST_CASE("preset validation") {
  auto p = make_preset(PresetName::baseline, {1, 2});
  p.replications = 3;
  CHECK_THROWS_AS(validate_preset(p, preset_base(p)), std::invalid_argument);
  CHECK_THROWS_AS(validate_preset(make_preset(PresetName::baseline, {}), SimConfig{}), std::invalid_argument);
  SimConfig bad;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(validate_preset(make_preset(PresetName::baseline), bad), ConfigError);
}

TEST_CASE("sweep writes every file and is reproducible") {
  const auto p = make_preset(PresetName::bid_policy_compare, {1, 2});
  const SimConfig base = short_base(p, 300);
  const auto a = scratch("sweep_a"), b = scratch("sweep_b");
  RunOptions two_threads;
  two_threads.threads = 2;
  const auto ra = run_preset(p, a, base, two_threads);
  const auto rb = run_preset(p, b, base, RunOptions{true, 1});
  CHECK(ra.exit_status == 0);
  CHECK(ra.checks.front().name == "invariants");
  CHECK(ra.checks.front().pass);
  REQUIRE(ra.points.size() == 3);
  CHECK(ra.points[1].label == "random_half");
  CHECK(ra.points[0].replications == 2);
  for (const char* point : {"greedy", "random_half", "proportional"})
    for (const char* f : {"rounds_seed1.csv", "rounds_seed2.csv"}) {
      const auto rel = fs::path(point) / f;
      REQUIRE(fs::exists(a / rel));
      CHECK(slurp(a / rel) == slurp(b / rel));
    }
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  const std::string csv = slurp(a / "sweep.csv");
  CHECK(csv.rfind("proposer_bid_policy,replications,primary_share", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  const auto& j = ra.summary;
  CHECK(j["preset"] == "bid_policy_compare");
  CHECK(j["config"]["rounds"] == "300");
  CHECK(j["points"].size() == 3);
  CHECK(j["points"][0]["runs"].size() == 2);
  CHECK(j["points"][0]["runs"][0]["rounds"] == 300);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("single-point presets write flat output and fractional labels are sanitised") {
  const auto p = make_preset(PresetName::multi_builder, {4});
  const auto dir = scratch("multi");
  const auto r = run_preset(p, dir, short_base(p, 200));
  CHECK(fs::exists(dir / "rounds_seed4.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK_FALSE(fs::exists(dir / "sweep.csv"));
  REQUIRE(r.points.size() == 1);
  CHECK(r.points[0].cumulative_reward.size() == 3);
  fs::remove_all(dir);

  auto is = make_preset(PresetName::initial_score_sweep, {1});
  is.points.resize(6);
  const auto d2 = scratch("ratio");
  run_preset(is, d2, short_base(is, 50));
  CHECK(fs::exists(d2 / "1_2" / "rounds_seed1.csv"));
  fs::remove_all(d2);
}

TEST_CASE("round logs can be skipped") {
  const auto p = make_preset(PresetName::baseline, {1});
  const auto dir = scratch("nologs");
  run_preset(p, dir, short_base(p, 100), RunOptions{false, 1});
  CHECK(fs::exists(dir / "summary.json"));
  CHECK_FALSE(fs::exists(dir / "rounds_seed1.csv"));
  fs::remove_all(dir);
}

TEST_CASE("analytic battery") {
  AnalyticCheckOptions small;
  small.oracle_points = 6;
  small.oracle_rounds = 100000;
  small.lemma1_points = 20;
  small.fuzz_points = 200;
  const auto good = analytic_battery(small);
  CHECK(good.exit_status == 0);
  for (const auto& r : good.reports) CHECK_MESSAGE(r.passed(), r.name);
  CHECK(good.baseline_fixed_point.found);
  CHECK(good.baseline_fixed_point.mu2_star == doctest::Approx(0.39862668770192217).epsilon(1e-9));
  CHECK(analytic_battery(small).report.dump() == good.report.dump());

  CHECK(lemma2_grid().size() == 20);
  for (const auto& g : lemma2_grid()) CHECK(g.rho > 0.5493);

  AnalyticCheckOptions broken = small;
  broken.forms = [](const AnalyticParams& q) {
    auto e = analytics::expected_rewards(q);
    e.v_secondary *= 0.9;
    return e;
  };
  const auto bad = analytic_battery(broken);
  CHECK(bad.exit_status != 0);
  bool named = false;
  for (const auto& r : bad.reports)
    for (const auto& f : r.failures()) named = named || f.check == "v_secondary";
  CHECK(named);
}
