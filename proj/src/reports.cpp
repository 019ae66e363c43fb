#include "flashback/reports.hpp"

#include <algorithm>
#include <cmath>

#include "flashback/config_io.hpp"

namespace flashback::reports {

namespace {

// JSON has no infinities; they go out as strings.
json number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

json quantiles(std::vector<double> v) {
  json q = json::object();
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    q["p" + std::to_string(static_cast<int>(std::lround(p * 100)))] = v[lo] + frac * (v[hi] - v[lo]);
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  q["mean"] = sum / static_cast<double>(v.size());
  return q;
}

}  // namespace

json to_json(const AnalyticParams& p) {
  return {{"mu1", number(p.mu1)}, {"mu2", number(p.mu2)}, {"mu3", number(p.mu3)},
          {"rho", number(p.rho)}, {"r1", number(p.r1)},   {"r2", number(p.r2)}};
}

json to_json(const analytics::CheckRecord& r) {
  return {{"check", r.check},
          {"point", to_json(r.point)},
          {"value", number(r.value)},
          {"reference", number(r.reference)},
          {"scale", number(r.scale)},
          {"pass", r.pass}};
}

json to_json(const analytics::CheckReport& r, bool all_records) {
  json j;
  j["name"] = r.name;
  j["passed"] = r.passed();
  j["count"] = r.records.size();
  json failures = json::array();
  for (const auto& f : r.failures()) failures.push_back(to_json(f));
  j["failures"] = failures;
  if (all_records) {
    json recs = json::array();
    for (const auto& rec : r.records) recs.push_back(to_json(rec));
    j["records"] = recs;
  }
  return j;
}

json to_json(const analytics::FixedPointResult& r) {
  return {{"found", r.found},
          {"mu2_star", number(r.mu2_star)},
          {"residual", number(r.residual)},
          {"iterations", r.iterations},
          {"bracket", {number(r.bracket.first), number(r.bracket.second)}},
          {"message", r.message}};
}

json to_json(const SimConfig& c) {
  json j = json::object();
  for (const auto& key : config_field_names()) j[key] = get_field(c, key);
  return j;
}

json run_summary(const SimResult& r, Round share_from) {
  const std::size_t nb = r.config.builder_count();
  json j;
  j["seed"] = r.config.seed;
  j["rounds"] = r.logs.size();
  json builders = json::array();
  for (std::size_t b = 0; b < nb; ++b) {
    const BuilderId id{static_cast<std::uint32_t>(b)};
    builders.push_back({{"builder", builder_name(id)},
                        {"blocks_won", r.blocks_won[b]},
                        {"block_share", r.block_share.empty() ? 0.0 : r.block_share[b]},
                        {"block_share_after", r.share_from(share_from, id)},
                        {"cumulative_reward", r.cumulative_builder_reward[b]},
                        {"mean_reward_per_block", r.mean_take_per_block(id)}});
  }
  j["share_from_round"] = share_from;
  j["builders"] = builders;
  j["bids_issued"] = r.bids_issued;
  j["bids_accepted"] = r.bids_accepted;
  j["convergence_round"] = r.convergence_round ? json(*r.convergence_round) : json(nullptr);
  j["final_rolling_primary_share"] =
      r.rolling_primary_share.empty() ? json(nullptr) : json(r.rolling_primary_share.back());
  j["proposer_reward"] = quantiles(r.proposer_rewards);
  double refunds = 0.0;
  for (double x : r.user_refunds) refunds += x;
  j["user_refund_total"] = refunds;
  j["user_refund"] = quantiles(r.user_refunds);
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace flashback::reports
