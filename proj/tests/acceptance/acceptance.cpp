// Runs the eleven acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flashback/analytics.hpp"
#include "flashback/config_io.hpp"
#include "flashback/engine.hpp"
#include "flashback/experiments.hpp"

using namespace flashback;
using namespace flashback::experiments;
namespace fs = std::filesystem;

namespace {

struct Line {
  int id;
  bool pass;
  std::string text;
};
std::vector<Line> lines;
std::vector<std::string> invariant_failures;

void report(int id, bool pass, const std::string& text) {
  lines.push_back({id, pass, text});
  std::printf("%s %d %s\n", pass ? "PASS" : "FAIL", id, text.c_str());
  std::fflush(stdout);
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

const analytics::CheckReport& find(const AnalyticOutcome& a, const std::string& name) {
  for (const auto& r : a.reports)
    if (r.name == name) return r;
  throw std::runtime_error("missing report " + name);
}

std::string describe(const analytics::CheckReport& r) {
  std::string s = std::to_string(r.records.size() - r.failures().size()) + "/" + std::to_string(r.records.size()) +
                  " records";
  if (!r.passed()) {
    const auto& f = r.failures().front();
    s += "; first failure " + f.check + " value " + fmt(f.value, 10) + " reference " + fmt(f.reference, 10);
  }
  return s;
}

const PresetCheck* check_named(const PresetOutcome& o, const std::string& name) {
  for (const auto& c : o.checks)
    if (c.name == name) return &c;
  return nullptr;
}

bool check_ok(const PresetOutcome& o, const std::string& name) {
  const auto* c = check_named(o, name);
  return c && c->pass;
}

void note_invariants(const std::string& what, const PresetOutcome& o) {
  const auto* c = check_named(o, "invariants");
  if (!c || !c->pass) invariant_failures.push_back(what + ": " + (c ? c->detail : "no invariant check"));
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = os.str();
  }
  return files;
}

SimConfig with_rounds(SimConfig c, std::int64_t rounds) {
  c.rounds = rounds;
  return c;
}

}  // namespace

int main() {
  const fs::path out = fs::current_path() / "acceptance_out";
  fs::remove_all(out);
  const auto seeds = default_seeds();  // 1..10
  constexpr std::int64_t kRounds = 10000;

  // ----------------------------------------------------------- analytics
  const auto t0 = std::chrono::steady_clock::now();
  const AnalyticOutcome battery = run_analytic_check(out / "analytic_a");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto& oracle = find(battery, "oracle_grid");
  report(1, oracle.passed() && oracle.records.size() == 200 && secs < 120.0,
         "closed forms vs Monte Carlo oracle, 50 points x 4 forms at 1e6 rounds within 4 SE: " + describe(oracle) +
             ", battery " + fmt(secs, 3) + " s");

  const auto& apf = find(battery, "symmetric_residual");
  report(2, apf.passed() && apf.records.size() == 24,
         "residual at mu2=0.5 vs simplified expression to 1e-10 on 24 points: " + describe(apf));

  const auto& l2 = find(battery, "lemma2");
  std::size_t grid_points = 0;
  for (const auto& r : l2.records) grid_points += r.point.rho > std::log(3.0) / 2 ? 1 : 0;
  report(3, l2.passed() && grid_points >= 20,
         "residual < 0 at mu2=0.5 for rho > ln(3)/2: " + describe(l2));

  const auto& l1 = find(battery, "lemma1");
  report(4, l1.passed() && l1.records.size() >= 200,
         "policy reward above default and simplified difference to 1e-10: " + describe(l1));

  const auto& fp = find(battery, "fixed_point");
  const auto& base_fp = battery.baseline_fixed_point;
  report(5, fp.passed() && base_fp.found && base_fp.mu2_star > 0.0 && base_fp.mu2_star < 0.5,
         "interior fixed point at rho=2 mu2*=" + fmt(base_fp.mu2_star, 12) + " residual " + fmt(base_fp.residual, 3) +
             ", plus 5 points above the existence bound: " + describe(fp));

  // ---------------------------------------------------------- simulation
  const auto baseline = make_preset(PresetName::baseline, seeds);
  const auto base_out = run_preset(baseline, out / "baseline_a", with_rounds(preset_base(baseline), kRounds));
  note_invariants("baseline", base_out);
  {
    const auto& p = base_out.points.front();
    const double gap = p.cumulative_reward[0] - p.cumulative_reward[1];
    report(6, check_ok(base_out, "primary_share_after_in_band") && check_ok(base_out, "primary_cumulative_exceeds_secondary"),
           "baseline over 10 seeds: share after round 1000 " + fmt(p.primary_share_after) + " in [0.50, 0.65], " +
               "cumulative primary " + fmt(p.cumulative_reward[0], 7) + " vs secondary " +
               fmt(p.cumulative_reward[1], 7) + " (gap " + fmt(gap, 4) + ")");
  }

  const auto multi = make_preset(PresetName::multi_builder, seeds);
  const auto multi_out = run_preset(multi, out / "multi_builder", with_rounds(preset_base(multi), kRounds));
  note_invariants("multi_builder", multi_out);
  {
    const auto& p = multi_out.points.front();
    report(7, check_ok(multi_out, "primary_share_above_one_third") && p.primary_share > 1.0 / 3.0,
           "one primary and two secondaries over 10 seeds: share " + fmt(p.primary_share) + ", after round 1000 " +
               fmt(p.primary_share_after) + ", both above 1/3");
  }

  const auto zero = make_preset(PresetName::zero_bid_rate, seeds);
  const auto zero_out = run_preset(zero, out / "zero_bid_rate", with_rounds(preset_base(zero), kRounds));
  note_invariants("zero_bid_rate", zero_out);
  {
    const auto& p = zero_out.points.front();
    const bool sel = check_ok(zero_out, "primary_selected_more_often");
    const bool per_block = check_ok(zero_out, "primary_per_block_reward_lower");
    const bool cum = check_ok(zero_out, "primary_cumulative_higher");
    report(8, sel && per_block && cum,
           std::string("r1 = 0 over 10 seeds: ") + "selection " + fmt(p.primary_share) + (sel ? " > 0.5" : " <= 0.5") +
               ", per-block reward " + fmt(p.reward_per_block[0]) + " vs " + fmt(p.reward_per_block[1]) +
               (per_block ? " (lower)" : " (not lower)") + ", cumulative " + fmt(p.cumulative_reward[0], 7) + " vs " +
               fmt(p.cumulative_reward[1], 7) + (cum ? " (higher)" : " (not higher)"));
  }

  {
    // No reservations and a single split rate: the two builders are identical.
    const double half_width = 2.576 * 0.5 / std::sqrt(static_cast<double>(kRounds));
    double worst = 0.0;
    bool ok = true;
    for (auto seed : seeds) {
      SimConfig c;
      c.rounds = kRounds;
      c.seed = seed;
      c.bidding = false;
      c.fixed_r1 = c.r2;
      try {
        const SimResult r = run(validate_config(c));
        const double dev = std::abs(r.share_from(0) - 0.5);
        worst = std::max(worst, dev);
        ok = ok && dev <= half_width && r.bids_issued == 0;
      } catch (const std::exception& e) {
        invariant_failures.push_back("null control seed " + std::to_string(seed) + ": " + e.what());
        ok = false;
      }
    }
    report(9, ok,
           "rho = inf, r1 = r2, 10 seeds x 1e4 rounds: largest |share - 0.5| " + fmt(worst) + " within " +
               fmt(half_width) + " on every seed");
  }

  // --------------------------------------------------------- determinism
  {
    std::vector<std::string> diffs;
    auto compare = [&](const std::string& what, const fs::path& a, const fs::path& b) {
      const auto ta = read_tree(a), tb = read_tree(b);
      if (ta.empty()) diffs.push_back(what + ": no output");
      if (ta != tb) diffs.push_back(what);
    };
    const auto base_b = run_preset(baseline, out / "baseline_b", with_rounds(preset_base(baseline), kRounds));
    note_invariants("baseline rerun", base_b);
    compare("baseline", out / "baseline_a", out / "baseline_b");

    run_analytic_check(out / "analytic_b");
    compare("analytic_check", out / "analytic_a", out / "analytic_b");

    std::size_t presets = 2;
    for (auto name : {PresetName::bid_policy_compare, PresetName::initial_score_sweep, PresetName::bid_count_sweep,
                      PresetName::ttl_sweep, PresetName::zero_bid_rate, PresetName::multi_builder}) {
      const auto p = make_preset(name, {1, 2});
      const auto base = with_rounds(preset_base(p), 1000);
      const std::string n = to_string(name);
      note_invariants(n, run_preset(p, out / "det" / (n + "_a"), base));
      note_invariants(n + " rerun", run_preset(p, out / "det" / (n + "_b"), base));
      compare(n, out / "det" / (n + "_a"), out / "det" / (n + "_b"));
      ++presets;
    }
    report(10, diffs.empty(),
           "two runs with identical seeds are byte-identical for all " + std::to_string(presets) + " presets" +
               (diffs.empty() ? "" : "; differs: " + diffs.front()));
  }

  report(11, invariant_failures.empty(),
         invariant_failures.empty() ? "conservation and commitment checks held on every round of every run above"
                                    : invariant_failures.front());

  int failed = 0;
  for (const auto& l : lines) failed += l.pass ? 0 : 1;
  std::printf("%zu criteria, %d failed\n", lines.size(), failed);
  return failed == 0 ? 0 : 1;
}
