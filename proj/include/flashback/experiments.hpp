#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flashback/analytics.hpp"
#include "flashback/domain.hpp"
#include "flashback/reports.hpp"

namespace flashback::experiments {

enum class PresetName {
  baseline,
  bid_policy_compare,
  initial_score_sweep,
  bid_count_sweep,
  ttl_sweep,
  zero_bid_rate,
  multi_builder,
  analytic_check,
};

std::string to_string(PresetName name);
PresetName parse_preset_name(const std::string& text);
const std::vector<std::string>& preset_names();

// key/value pairs in config-file syntax, applied through set_field.
using Overrides = std::vector<std::pair<std::string, std::string>>;

void apply_overrides(SimConfig& config, const Overrides& overrides);

struct SweepPoint {
  std::string label;
  Overrides overrides;
};

struct ExperimentPreset {
  PresetName name{PresetName::baseline};
  Overrides overrides;            // fixed for the whole preset
  std::string sweep_parameter;    // empty for single-point presets
  std::vector<SweepPoint> points; // one unlabelled point when not a sweep
  std::int64_t replications{0};
  std::vector<std::uint64_t> seeds;
};

std::vector<std::uint64_t> default_seeds();  // 1..10
ExperimentPreset make_preset(PresetName name, std::vector<std::uint64_t> seeds = default_seeds());
// Throws std::invalid_argument unless replications == |seeds| > 0 and every
// point yields a valid config on top of `base`.
void validate_preset(const ExperimentPreset& preset, const SimConfig& base);

// Defaults with the preset's fixed overrides applied.
SimConfig preset_base(const ExperimentPreset& preset, SimConfig defaults = {});

struct PresetCheck {
  std::string name;
  bool pass{false};
  double value{0.0};
  std::string detail;
};

struct PointAggregate {
  std::string label;
  std::int64_t replications{0};
  double primary_share{0.0};        // all rounds
  double primary_share_after{0.0};  // rounds >= share_from_round
  double primary_share_after_sd{0.0};
  std::vector<double> cumulative_reward;  // per builder, mean over seeds
  std::vector<double> reward_per_block;   // per builder, mean over seeds
  double bids_issued{0.0};
  double bids_accepted{0.0};
  double convergence_round{0.0};
  Round share_from_round{0};
};

struct RunOptions {
  bool write_round_logs{true};
  unsigned threads{0};  // 0 = hardware concurrency
};

struct PresetOutcome {
  int exit_status{0};
  std::vector<PresetCheck> checks;
  std::vector<PointAggregate> points;
  reports::json summary;
};

// Runs every (point, seed) pair, writes round logs, summary.json and, for
// sweeps, sweep.csv into out_dir. The analytic_check preset delegates to
// run_analytic_check. Invariant violations become failed checks.
PresetOutcome run_preset(const ExperimentPreset& preset, const std::filesystem::path& out_dir, const SimConfig& base,
                         const RunOptions& options = {});
PresetOutcome run_preset(const ExperimentPreset& preset, const std::filesystem::path& out_dir);

struct AnalyticCheckOptions {
  std::uint64_t seed{20240601};
  std::size_t oracle_points{50};
  std::int64_t oracle_rounds{1'000'000};
  double k_se{4.0};
  std::size_t lemma1_points{100};
  std::size_t fuzz_points{2000};
  analytics::ClosedForms forms{analytics::expected_rewards};
};

struct AnalyticOutcome {
  int exit_status{0};
  std::vector<analytics::CheckReport> reports;
  analytics::FixedPointResult baseline_fixed_point;
  reports::json report;
};

// Full battery; writes analytic_report.json. Nonzero exit on any failure.
AnalyticOutcome run_analytic_check(const std::filesystem::path& out_dir, const AnalyticCheckOptions& options = {});
// Same battery without touching the filesystem.
AnalyticOutcome analytic_battery(const AnalyticCheckOptions& options = {});

std::vector<analytics::Lemma2Point> lemma2_grid();       // 20 points, rho > ln(3)/2
std::vector<analytics::Lemma2Point> symmetric_residual_grid();   // rho x mu3 x r2 product

}  // namespace flashback::experiments
