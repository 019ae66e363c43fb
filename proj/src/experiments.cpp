#include "flashback/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "flashback/config_io.hpp"
#include "flashback/engine.hpp"
#include "flashback/rng.hpp"

namespace flashback::experiments {

namespace fs = std::filesystem;
using reports::json;

namespace {

constexpr Round kShareFrom = 1000;

const std::vector<std::pair<PresetName, std::string>>& name_table() {
  static const std::vector<std::pair<PresetName, std::string>> t = {
      {PresetName::baseline, "baseline"},
      {PresetName::bid_policy_compare, "bid_policy_compare"},
      {PresetName::initial_score_sweep, "initial_score_sweep"},
      {PresetName::bid_count_sweep, "bid_count_sweep"},
      {PresetName::ttl_sweep, "ttl_sweep"},
      {PresetName::zero_bid_rate, "zero_bid_rate"},
      {PresetName::multi_builder, "multi_builder"},
      {PresetName::analytic_check, "analytic_check"},
  };
  return t;
}

std::string dir_name(const std::string& label) {
  std::string s;
  for (char ch : label) s += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-') ? ch : '_';
  return s;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

struct RunDigest {
  json summary;
  double share{0.0};
  double share_after{0.0};
  std::vector<double> cumulative;
  std::vector<double> per_block;
  double bids_issued{0.0};
  double bids_accepted{0.0};
  double convergence{0.0};
  std::string error;
};

Round share_from_for(const SimConfig& c) { return c.rounds > kShareFrom ? kShareFrom : 0; }

RunDigest run_one(const SimConfig& config, const fs::path& csv_path, bool write_log) {
  RunDigest d;
  try {
    const SimResult r = run(validate_config(config));
    const Round from = share_from_for(config);
    if (write_log) {
      auto out = open_out(csv_path);
      write_round_csv(out, r);
    }
    d.summary = reports::run_summary(r, from);
    d.share = r.share_from(0);
    d.share_after = r.share_from(from);
    d.cumulative = r.cumulative_builder_reward;
    for (std::size_t b = 0; b < config.builder_count(); ++b)
      d.per_block.push_back(r.mean_take_per_block(BuilderId{static_cast<std::uint32_t>(b)}));
    d.bids_issued = static_cast<double>(r.bids_issued);
    d.bids_accepted = static_cast<double>(r.bids_accepted);
    d.convergence = r.convergence_round ? static_cast<double>(*r.convergence_round) : std::nan("");
  } catch (const std::exception& e) {
    d.error = e.what();
  }
  return d;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

PointAggregate aggregate(const std::string& label, const std::vector<RunDigest>& runs, std::size_t builders,
                         Round from) {
  PointAggregate a;
  a.label = label;
  a.share_from_round = from;
  a.replications = static_cast<std::int64_t>(runs.size());
  a.cumulative_reward.assign(builders, 0.0);
  a.reward_per_block.assign(builders, 0.0);
  std::vector<double> shares, after, conv;
  for (const auto& r : runs) {
    if (!r.error.empty()) continue;
    shares.push_back(r.share);
    after.push_back(r.share_after);
    if (!std::isnan(r.convergence)) conv.push_back(r.convergence);
    for (std::size_t b = 0; b < builders; ++b) {
      a.cumulative_reward[b] += r.cumulative[b];
      a.reward_per_block[b] += r.per_block[b];
    }
    a.bids_issued += r.bids_issued;
    a.bids_accepted += r.bids_accepted;
  }
  const double n = std::max<double>(1.0, static_cast<double>(shares.size()));
  for (auto& x : a.cumulative_reward) x /= n;
  for (auto& x : a.reward_per_block) x /= n;
  a.bids_issued /= n;
  a.bids_accepted /= n;
  a.primary_share = mean_of(shares);
  a.primary_share_after = mean_of(after);
  a.primary_share_after_sd = sd_of(after);
  a.convergence_round = conv.empty() ? std::nan("") : mean_of(conv);
  return a;
}

json to_json(const PointAggregate& a) {
  json j;
  j["label"] = a.label;
  j["replications"] = a.replications;
  j["primary_share"] = a.primary_share;
  j["share_from_round"] = a.share_from_round;
  j["primary_share_after"] = a.primary_share_after;
  j["primary_share_after_sd"] = a.primary_share_after_sd;
  j["cumulative_reward"] = a.cumulative_reward;
  j["reward_per_block"] = a.reward_per_block;
  j["bids_issued"] = a.bids_issued;
  j["bids_accepted"] = a.bids_accepted;
  j["convergence_round"] = std::isnan(a.convergence_round) ? json(nullptr) : json(a.convergence_round);
  return j;
}

std::vector<PresetCheck> preset_checks(PresetName name, const std::vector<PointAggregate>& points) {
  std::vector<PresetCheck> checks;
  if (points.empty()) return checks;
  const PointAggregate& p = points.front();
  auto best_secondary = [](const std::vector<double>& v) { return *std::max_element(v.begin() + 1, v.end()); };
  switch (name) {
    case PresetName::baseline:
      checks.push_back({"primary_share_after_in_band", p.primary_share_after >= 0.50 && p.primary_share_after <= 0.65,
                        p.primary_share_after, "mean primary share after round " +
                                                   std::to_string(p.share_from_round) + " in [0.50, 0.65]"});
      checks.push_back({"primary_cumulative_exceeds_secondary",
                        p.cumulative_reward[0] > best_secondary(p.cumulative_reward),
                        p.cumulative_reward[0] - best_secondary(p.cumulative_reward),
                        "mean cumulative builder reward, primary minus best secondary"});
      break;
    case PresetName::multi_builder:
      checks.push_back({"primary_share_above_one_third", p.primary_share_after > 1.0 / 3.0, p.primary_share_after,
                        "mean primary share after round " + std::to_string(p.share_from_round)});
      break;
    case PresetName::zero_bid_rate:
      checks.push_back({"primary_selected_more_often", p.primary_share > 0.5, p.primary_share,
                        "mean primary share over all rounds"});
      checks.push_back({"primary_per_block_reward_lower", p.reward_per_block[0] < best_secondary(p.reward_per_block),
                        p.reward_per_block[0] - best_secondary(p.reward_per_block),
                        "mean builder reward per won block, primary minus secondary"});
      checks.push_back({"primary_cumulative_higher", p.cumulative_reward[0] > best_secondary(p.cumulative_reward),
                        p.cumulative_reward[0] - best_secondary(p.cumulative_reward),
                        "mean cumulative builder reward, primary minus secondary"});
      break;
    default:
      break;
  }
  return checks;
}

std::string sweep_csv(const std::string& parameter, const std::vector<PointAggregate>& points, std::size_t builders) {
  std::string s = parameter + ",replications,primary_share,primary_share_after,primary_share_after_sd";
  for (std::size_t b = 0; b < builders; ++b) s += ",cumulative_" + builder_name(BuilderId{static_cast<std::uint32_t>(b)});
  for (std::size_t b = 0; b < builders; ++b) s += ",per_block_" + builder_name(BuilderId{static_cast<std::uint32_t>(b)});
  s += ",bids_issued,bids_accepted,convergence_round\n";
  for (const auto& p : points) {
    s += p.label + "," + std::to_string(p.replications) + "," + format_double(p.primary_share) + "," +
         format_double(p.primary_share_after) + "," + format_double(p.primary_share_after_sd);
    for (double x : p.cumulative_reward) s += "," + format_double(x);
    for (double x : p.reward_per_block) s += "," + format_double(x);
    s += "," + format_double(p.bids_issued) + "," + format_double(p.bids_accepted) + "," +
         (std::isnan(p.convergence_round) ? std::string() : format_double(p.convergence_round)) + "\n";
  }
  return s;
}

}  // namespace

std::string to_string(PresetName name) {
  for (const auto& [n, s] : name_table())
    if (n == name) return s;
  throw std::invalid_argument("unknown preset");
}

PresetName parse_preset_name(const std::string& text) {
  for (const auto& [n, s] : name_table())
    if (s == text) return n;
  throw std::invalid_argument("unknown preset '" + text + "'");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& entry : name_table()) v.push_back(entry.second);
    return v;
  }();
  return names;
}

void apply_overrides(SimConfig& config, const Overrides& overrides) {
  for (const auto& [k, v] : overrides) set_field(config, k, v);
}

std::vector<std::uint64_t> default_seeds() {
  std::vector<std::uint64_t> s(10);
  std::iota(s.begin(), s.end(), 1);
  return s;
}

ExperimentPreset make_preset(PresetName name, std::vector<std::uint64_t> seeds) {
  ExperimentPreset p;
  p.name = name;
  p.replications = static_cast<std::int64_t>(seeds.size());
  p.seeds = std::move(seeds);
  switch (name) {
    case PresetName::baseline:
    case PresetName::analytic_check:
      break;
    case PresetName::bid_policy_compare:
      p.sweep_parameter = "proposer_bid_policy";
      for (const char* policy : {"greedy", "random_half", "proportional"})
        p.points.push_back({policy, {{"proposer_bid_policy", policy}}});
      break;
    case PresetName::initial_score_sweep: {
      p.sweep_parameter = "initial_score_ratio";
      p.overrides = {{"initial_knowledge_length", "200"}};
      const std::vector<std::pair<std::string, double>> ratios = {{"16", 16.0},     {"8", 8.0},       {"4", 4.0},
                                                                  {"2", 2.0},       {"1", 1.0},       {"1/2", 0.5},
                                                                  {"1/4", 0.25},    {"1/8", 0.125},   {"1/16", 0.0625}};
      for (const auto& [label, r] : ratios) p.points.push_back({label, {{"initial_scores", format_double(r) + ",1"}}});
      break;
    }
    case PresetName::bid_count_sweep:
      p.sweep_parameter = "bid_count";
      for (int k = 1; k <= 20; ++k) p.points.push_back({std::to_string(k), {{"bid_count", std::to_string(k)}}});
      break;
    case PresetName::ttl_sweep:
      p.sweep_parameter = "ttl";
      for (int ttl : {1, 2, 3, 5, 10, 15, 20}) p.points.push_back({std::to_string(ttl), {{"ttl", std::to_string(ttl)}}});
      break;
    case PresetName::zero_bid_rate:
      p.overrides = {{"fixed_r1", "0"}, {"uniform_routing", "true"}};
      break;
    case PresetName::multi_builder:
      p.overrides = {{"n_secondary_builders", "2"}, {"initial_scores", "1,1,1"}};
      break;
  }
  if (p.points.empty()) p.points.push_back({"", {}});
  return p;
}

SimConfig preset_base(const ExperimentPreset& preset, SimConfig defaults) {
  apply_overrides(defaults, preset.overrides);
  return defaults;
}

void validate_preset(const ExperimentPreset& preset, const SimConfig& base) {
  if (preset.seeds.empty()) throw std::invalid_argument("preset needs at least one seed");
  if (preset.replications != static_cast<std::int64_t>(preset.seeds.size()))
    throw std::invalid_argument("replications must equal the number of seeds");
  if (preset.name == PresetName::analytic_check) return;
  for (const auto& point : preset.points) {
    SimConfig c = base;
    apply_overrides(c, point.overrides);
    validate_config(c);
  }
}

PresetOutcome run_preset(const ExperimentPreset& preset, const fs::path& out_dir) {
  return run_preset(preset, out_dir, preset_base(preset));
}

PresetOutcome run_preset(const ExperimentPreset& preset, const fs::path& out_dir, const SimConfig& base,
                         const RunOptions& options) {
  PresetOutcome outcome;
  if (preset.name == PresetName::analytic_check) {
    AnalyticCheckOptions ao;
    ao.seed = preset.seeds.empty() ? ao.seed : preset.seeds.front();
    const AnalyticOutcome a = run_analytic_check(out_dir, ao);
    outcome.exit_status = a.exit_status;
    for (const auto& r : a.reports)
      outcome.checks.push_back({r.name, r.passed(), static_cast<double>(r.failures().size()), "failing records"});
    outcome.summary = a.report;
    return outcome;
  }

  validate_preset(preset, base);
  prepare_dir(out_dir);
  const bool sweep = !preset.sweep_parameter.empty();
  for (const auto& point : preset.points)
    if (sweep && options.write_round_logs) prepare_dir(out_dir / dir_name(point.label));

  struct Job {
    std::size_t point;
    std::size_t rep;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < preset.points.size(); ++i)
    for (std::size_t k = 0; k < preset.seeds.size(); ++k) jobs.push_back({i, k});
  std::vector<RunDigest> digests(jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      const auto& job = jobs[j];
      const auto& point = preset.points[job.point];
      SimConfig c = base;
      apply_overrides(c, point.overrides);
      c.seed = preset.seeds[job.rep];
      const fs::path dir = sweep ? out_dir / dir_name(point.label) : out_dir;
      digests[j] = run_one(c, dir / ("rounds_seed" + std::to_string(c.seed) + ".csv"), options.write_round_logs);
    }
  };
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json summary;
  summary["preset"] = to_string(preset.name);
  summary["config"] = reports::to_json(base);
  summary["seeds"] = preset.seeds;
  if (sweep) summary["sweep_parameter"] = preset.sweep_parameter;

  std::vector<std::string> errors;
  json points = json::array();
  for (std::size_t i = 0; i < preset.points.size(); ++i) {
    SimConfig c = base;
    apply_overrides(c, preset.points[i].overrides);
    std::vector<RunDigest> runs(digests.begin() + static_cast<std::ptrdiff_t>(i * preset.seeds.size()),
                                digests.begin() + static_cast<std::ptrdiff_t>((i + 1) * preset.seeds.size()));
    json run_list = json::array();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      if (!runs[k].error.empty()) {
        errors.push_back("seed " + std::to_string(preset.seeds[k]) + ": " + runs[k].error);
        run_list.push_back({{"seed", preset.seeds[k]}, {"error", runs[k].error}});
      } else {
        run_list.push_back(runs[k].summary);
      }
    }
    outcome.points.push_back(aggregate(preset.points[i].label, runs, c.builder_count(), share_from_for(c)));
    json pj = to_json(outcome.points.back());
    json ov = json::object();
    for (const auto& [k, v] : preset.points[i].overrides) ov[k] = v;
    pj["overrides"] = ov;
    pj["runs"] = run_list;
    points.push_back(pj);
  }
  summary["points"] = points;

  outcome.checks.push_back({"invariants", errors.empty(), static_cast<double>(errors.size()),
                            errors.empty() ? "every round passed the in-run checks" : errors.front()});
  if (errors.empty()) {
    auto more = preset_checks(preset.name, outcome.points);
    outcome.checks.insert(outcome.checks.end(), more.begin(), more.end());
  }
  json checks = json::array();
  bool ok = true;
  for (const auto& c : outcome.checks) {
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"detail", c.detail}});
    ok = ok && c.pass;
  }
  summary["checks"] = checks;
  summary["passed"] = ok;
  outcome.exit_status = ok ? 0 : 1;
  outcome.summary = summary;

  {
    auto out = open_out(out_dir / "summary.json");
    out << reports::dump(summary);
  }
  if (sweep) {
    auto out = open_out(out_dir / "sweep.csv");
    out << sweep_csv(preset.sweep_parameter, outcome.points, base.builder_count());
  }
  return outcome;
}

// ---------------------------------------------------------------- analytics

std::vector<analytics::Lemma2Point> lemma2_grid() {
  std::vector<analytics::Lemma2Point> grid;
  const double lo = 0.55, hi = 6.0;
  const double mu3s[] = {0.1, 0.5, 2.0};
  const double r2s[] = {0.02, 0.2};
  for (int i = 0; i < 20; ++i) {
    const double rho = lo * std::pow(hi / lo, i / 19.0);
    grid.push_back({rho, mu3s[i % 3], r2s[i % 2]});
  }
  return grid;
}

std::vector<analytics::Lemma2Point> symmetric_residual_grid() {
  std::vector<analytics::Lemma2Point> grid;
  for (double rho : {0.6, 1.0, 2.0, 5.0})
    for (double mu3 : {0.1, 0.5, 2.0})
      for (double r2 : {0.02, 0.2}) grid.push_back({rho, mu3, r2});
  return grid;
}

AnalyticOutcome analytic_battery(const AnalyticCheckOptions& o) {
  using namespace analytics;
  AnalyticOutcome out;

  out.reports.push_back(check_oracle_grid(random_oracle_grid(o.oracle_points, derive_seed(o.seed, 1)),
                                          o.oracle_rounds, derive_seed(o.seed, 2), o.k_se, o.forms));

  auto f = check_symmetric_residual_simplified(symmetric_residual_grid(), 1e-10);
  f.name = "symmetric_residual";
  out.reports.push_back(f);

  auto l2 = lemma2_grid();
  l2.push_back({0.55, 0.5, 0.02});
  l2.push_back({5.0, 2.0, 0.02});
  out.reports.push_back(check_lemma2(l2));

  auto l1 = random_lemma1_grid(o.lemma1_points, derive_seed(o.seed, 3));
  l1.push_back({0.4, 1.0, 0.5, 0.02});
  l1.push_back({0.49, 0.5, 0.1, 0.02});
  out.reports.push_back(check_lemma1(l1));

  // Interior fixed point at the reference point and above the existence bound.
  CheckReport fp{"fixed_point", {}};
  constexpr double tol = 1e-9;
  auto solve_and_record = [&](double rho, double mu3, double r2) {
    const FixedPointResult r = solve_fixed_point(rho, 0.0, r2, mu3, tol);
    const double mu2 = r.found ? r.mu2_star : 0.5;
    const auto p = AnalyticParams::from_mu2(mu2, mu3, rho, 0.0, r2);
    const bool interior = r.found && r.mu2_star > 0.0 && r.mu2_star < 0.5;
    fp.records.push_back({"residual_at_root", p, r.residual, 0.0, tol, interior && std::abs(r.residual) < tol});
    const double gap = r.found ? fixed_point_ratio_gap(r.mu2_star, rho, 0.0, r2, mu3) : 1.0;
    fp.records.push_back({"ratio_reproduces_mu2", p, gap, 0.0, 1e-6, r.found && gap < 1e-6});
    return r;
  };
  out.baseline_fixed_point = solve_and_record(2.0, 0.5, 0.02);
  Rng rng(derive_seed(o.seed, 4));
  for (int i = 0; i < 5; ++i) {
    const double mu3 = 0.1 + 1.9 * rng.uniform();
    const double rho = existence_rho_bound(existence_best_mu2(), mu3) + 0.1 + rng.uniform();
    solve_and_record(rho, mu3, 0.02);
  }
  out.reports.push_back(fp);

  // The cubic term wins for small mu2 once rho is large.
  CheckReport small{"small_mu2_sign", {}};
  for (double rho : {5.0, 8.0, 12.0}) {
    const double res = fixed_point_residual(0.05, rho, 0.0, 0.02, 0.5);
    small.records.push_back({"residual_positive", AnalyticParams::from_mu2(0.05, 0.5, rho, 0.0, 0.02), res, 0.0, 0.0,
                             res > 0.0});
  }
  out.reports.push_back(small);

  CheckReport fuzz{"finite_nonnegative", {}};
  Rng frng(derive_seed(o.seed, 5));
  for (std::size_t i = 0; i < o.fuzz_points; ++i) {
    const double mu2 = 0.001 + 0.998 * frng.uniform();
    const double rho = std::exp(std::log(1e-3) + frng.uniform() * std::log(1e5));  // 1e-3 .. 100
    const double mu3 = 1e-6 + 5.0 * frng.uniform();
    const double r1 = 0.999 * frng.uniform();
    const double r2 = 0.001 + 0.998 * frng.uniform();
    const auto p = AnalyticParams::from_mu2(mu2, mu3, rho, r1, r2);
    const ExpectedRewards e = o.forms(p);
    double worst = e.v_p_policy;
    bool ok = true;
    for (double v : {e.v_p_policy, e.v_p_default, e.v_primary, e.v_secondary}) {
      ok = ok && std::isfinite(v) && v >= 0.0;
      worst = std::isfinite(v) ? std::min(worst, v) : v;
    }
    fuzz.records.push_back({"finite_nonnegative", p, worst, 0.0, 0.0, ok});
  }
  out.reports.push_back(fuzz);

  json report;
  report["seed"] = o.seed;
  report["oracle_rounds"] = o.oracle_rounds;
  report["k_se"] = o.k_se;
  json list = json::array();
  bool ok = true;
  for (const auto& r : out.reports) {
    list.push_back(reports::to_json(r, r.name != "finite_nonnegative"));
    ok = ok && r.passed();
  }
  report["checks"] = list;
  report["baseline_fixed_point"] = reports::to_json(out.baseline_fixed_point);
  report["passed"] = ok;
  out.report = report;
  out.exit_status = ok ? 0 : 1;
  return out;
}

AnalyticOutcome run_analytic_check(const fs::path& out_dir, const AnalyticCheckOptions& options) {
  prepare_dir(out_dir);
  AnalyticOutcome out = analytic_battery(options);
  auto file = open_out(out_dir / "analytic_report.json");
  file << reports::dump(out.report);
  return out;
}

}  // namespace flashback::experiments
