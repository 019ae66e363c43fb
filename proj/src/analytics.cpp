#include "flashback/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "flashback/rng.hpp"

namespace flashback::analytics {

namespace {

// rho * decay where decay = exp(-rho * k); zero when rho is infinite.
double mul0(double rho, double decay) { return decay == 0.0 ? 0.0 : rho * decay; }

struct Shorthand {
  double m1, m2, m3, r1, r2;
  double a;     // P(X > rho) = e^{-rho/mu1}
  double e2;    // e^{-rho/mu2}
  double b;     // e^{-rho (mu1+mu2)/(mu1 mu2)} = a * e2
  double s;     // mu1 + mu2
  double ra;    // rho * a
  double rb;    // rho * b
  double k;     // mu1^2 mu2 / s^2
  double f;     // mu1 / s

  explicit Shorthand(const AnalyticParams& p)
      : m1(p.mu1), m2(p.mu2), m3(p.mu3), r1(p.r1), r2(p.r2) {
    a = std::exp(-p.rho / m1);
    e2 = std::exp(-p.rho / m2);
    s = m1 + m2;
    b = std::exp(-p.rho * s / (m1 * m2));
    ra = mul0(p.rho, a);
    rb = mul0(p.rho, b);
    k = m1 * m1 * m2 / (s * s);
    f = m1 / s;
  }
};

// The R[t] = 0 sub-terms with the common factor (1 - e^{-rho/mu1}) removed,
// i.e. conditional expectations given R[t] = 0.
PolicyTerms unreserved_conditional(const Shorthand& h) {
  const double q = 1.0 - h.r2;
  PolicyTerms u;
  u.t_secondary_x_reserved_next = h.a * q * h.m2;
  u.t_secondary_x_wins = q * (h.m2 + h.f * h.rb + h.k * h.b - h.k - h.rb - h.m2 * h.b);
  u.t_secondary_y_reserved_next = h.a * q * h.m3;
  u.t_secondary_y_wins = h.m3 * q * (1.0 - h.f + h.f * h.b - h.b);
  u.t_primary_x_wins = q * (-(1.0 - h.e2) * h.ra - (1.0 - h.e2) * h.m1 * h.a - h.f * h.rb - h.k * h.b + h.k -
                            h.m1 * h.f * h.b + h.m1 * h.f);
  u.t_primary_y_wins = q * h.m3 * (h.f * (1.0 - h.b) - h.a * (1.0 - h.e2));
  return u;
}

// Ratio-estimator batch means. Each quantity accumulates (sum, count) per
// batch; the estimate is total sum / total count.
class BatchMeans {
 public:
  BatchMeans(std::size_t quantities, std::int64_t n_rounds)
      : k_(quantities), batch_len_(std::max<std::int64_t>(50, n_rounds / 200)) {
    sums_.emplace_back(k_, 0.0);
    counts_.emplace_back(k_, 0.0);
  }

  void add(std::size_t i, double value, double count = 1.0) {
    sums_.back()[i] += value;
    counts_.back()[i] += count;
  }

  void end_round() {
    if (++in_batch_ < batch_len_) return;
    sums_.emplace_back(k_, 0.0);
    counts_.emplace_back(k_, 0.0);
    in_batch_ = 0;
  }

  // Drops an empty trailing batch or merges a partial one into its neighbour.
  void finish() {
    if (sums_.size() < 2) return;
    if (in_batch_ > 0) {
      auto& s = sums_[sums_.size() - 2];
      auto& c = counts_[counts_.size() - 2];
      for (std::size_t i = 0; i < k_; ++i) {
        s[i] += sums_.back()[i];
        c[i] += counts_.back()[i];
      }
    }
    sums_.pop_back();
    counts_.pop_back();
    in_batch_ = 0;
  }

  // (mean, standard error) of quantity i.
  std::pair<double, double> estimate(std::size_t i) const {
    double tot_s = 0.0, tot_n = 0.0;
    for (std::size_t j = 0; j < sums_.size(); ++j) {
      tot_s += sums_[j][i];
      tot_n += counts_[j][i];
    }
    if (tot_n == 0.0) return {0.0, 0.0};
    const double m = tot_s / tot_n;
    const double nb = static_cast<double>(sums_.size());
    if (nb < 2) return {m, 0.0};
    double ss = 0.0;
    for (std::size_t j = 0; j < sums_.size(); ++j) {
      const double d = sums_[j][i] - m * counts_[j][i];
      ss += d * d;
    }
    return {m, std::sqrt(nb / (nb - 1.0) * ss) / tot_n};
  }

  std::int64_t count(std::size_t i) const {
    double n = 0.0;
    for (const auto& c : counts_) n += c[i];
    return static_cast<std::int64_t>(n);
  }

 private:
  std::size_t k_;
  std::int64_t batch_len_;
  std::int64_t in_batch_{0};
  std::vector<std::vector<double>> sums_;
  std::vector<std::vector<double>> counts_;
};

void require_rounds(std::int64_t n_rounds) {
  if (n_rounds < 10000) throw std::invalid_argument("mc_oracle needs at least 1e4 rounds");
}

struct Draw {
  double x_prev, x, xp, y;
  bool reserved, reserved_next;
};

class ChainSampler {
 public:
  ChainSampler(const AnalyticParams& p, std::uint64_t seed) : p_(p), rng_(seed) {
    x_prev_ = rng_.exponential(p.mu1);
  }
  Draw next() {
    Draw d;
    d.x_prev = x_prev_;
    d.x = rng_.exponential(p_.mu1);
    d.xp = rng_.exponential(p_.mu2);
    d.y = rng_.exponential(p_.mu3);
    d.reserved = d.x_prev > p_.rho;
    d.reserved_next = d.x > p_.rho;
    x_prev_ = d.x;
    return d;
  }

 private:
  AnalyticParams p_;
  Rng rng_;
  double x_prev_;
};

}  // namespace

std::vector<std::pair<std::string, double>> PolicyTerms::named() const {
  return {{"a_reserved_bundle", a_reserved_bundle},
          {"a_unreserved_private", a_unreserved_private},
          {"a_public", a_public},
          {"t_secondary_x_reserved_next", t_secondary_x_reserved_next},
          {"t_secondary_x_wins", t_secondary_x_wins},
          {"t_secondary_y_reserved_next", t_secondary_y_reserved_next},
          {"t_secondary_y_wins", t_secondary_y_wins},
          {"t_primary_x_wins", t_primary_x_wins},
          {"t_primary_y_wins", t_primary_y_wins}};
}

std::vector<std::pair<std::string, double>> PrimaryTerms::named() const {
  return {{"reserved_bundle", reserved_bundle},
          {"reserved_round_x", reserved_round_x},
          {"reserved_round_y", reserved_round_y},
          {"open_round_x", open_round_x},
          {"open_round_y", open_round_y}};
}

std::vector<std::pair<std::string, double>> SecondaryTerms::named() const {
  return {{"x_wins", x_wins}, {"y_wins", y_wins}};
}

PolicyTerms policy_terms(const AnalyticParams& p) {
  const Shorthand h(p);
  PolicyTerms t = unreserved_conditional(h);
  const double open = 1.0 - h.a;
  t.t_secondary_x_reserved_next *= open;
  t.t_secondary_x_wins *= open;
  t.t_secondary_y_reserved_next *= open;
  t.t_secondary_y_wins *= open;
  t.t_primary_x_wins *= open;
  t.t_primary_y_wins *= open;
  t.a_reserved_bundle = (1.0 - h.r1) * (h.ra + h.m1 * h.a);
  t.a_unreserved_private = (1.0 - h.r2) * h.a * (-h.ra - h.m1 * h.a + h.m1);
  t.a_public = (1.0 - h.r2) * h.m3 * h.a;
  return t;
}

PrimaryTerms primary_terms(const AnalyticParams& p) {
  const Shorthand h(p);
  const double open = 1.0 - h.a;
  PrimaryTerms t;
  t.reserved_bundle = h.r1 * (h.ra + h.m1 * h.a);
  t.reserved_round_x = h.r2 * h.a * (h.m1 - h.ra - h.m1 * h.a);
  t.reserved_round_y = h.r2 * h.m3 * h.a;
  t.open_round_x = h.r2 * open *
                   (-h.ra * (1.0 - h.e2) - h.m1 * h.a * (1.0 - h.e2) - h.f * h.rb - h.k * h.b + h.k +
                    h.m1 * h.f * (1.0 - h.b));
  t.open_round_y = h.r2 * h.m3 * open * (h.f * (1.0 - h.b) - h.a * (1.0 - h.e2));
  return t;
}

SecondaryTerms secondary_terms(const AnalyticParams& p) {
  const Shorthand h(p);
  const double open = 1.0 - h.a;
  SecondaryTerms t;
  t.x_wins = h.r2 * open * (h.a * h.m2 + h.m2 + h.f * h.rb + h.k * h.b - h.k - h.rb - h.m2 * h.b);
  t.y_wins = h.r2 * h.m3 * open * (h.a + 1.0 + h.f * h.b - h.f - h.b);
  return t;
}

double expected_validator_reward_policy(const AnalyticParams& p) {
  const auto t = policy_terms(p);
  return t.reserved_sum() + t.unreserved_sum();
}

double expected_validator_reward_default(const AnalyticParams& p) {
  return unreserved_conditional(Shorthand(p)).unreserved_sum();
}

double expected_primary_builder_reward(const AnalyticParams& p) { return primary_terms(p).sum(); }

double expected_secondary_builder_reward(const AnalyticParams& p) { return secondary_terms(p).sum(); }

ExpectedRewards expected_rewards(const AnalyticParams& p) {
  return {expected_validator_reward_policy(p), expected_validator_reward_default(p),
          expected_primary_builder_reward(p), expected_secondary_builder_reward(p)};
}

OracleEstimate mc_oracle(const AnalyticParams& p, std::int64_t n_rounds, std::uint64_t seed) {
  require_rounds(n_rounds);
  ChainSampler chain(p, seed);
  BatchMeans acc(4, n_rounds);
  const double q = 1.0 - p.r2;

  for (std::int64_t t = 0; t < n_rounds; ++t) {
    const Draw d = chain.next();
    const double own_x = d.reserved_next ? 0.0 : d.x;
    const double secondary_block = q * (d.xp + d.y);
    const double primary_block = q * own_x + q * d.y;
    if (d.reserved) {
      acc.add(0, (1.0 - p.r1) * d.x_prev + primary_block);
      acc.add(1, 0.0, 0.0);
      acc.add(2, p.r1 * d.x_prev + p.r2 * (own_x + d.y));
      acc.add(3, 0.0);
    } else {
      const double best = std::max(secondary_block, primary_block);
      acc.add(0, best);
      acc.add(1, best);
      acc.add(2, primary_block > secondary_block ? p.r2 * (own_x + d.y) : 0.0);
      acc.add(3, secondary_block > primary_block ? p.r2 * (d.xp + d.y) : 0.0);
    }
    acc.end_round();
  }
  acc.finish();

  OracleEstimate out;
  out.rounds = n_rounds;
  out.default_rounds = acc.count(1);
  std::tie(out.mean.v_p_policy, out.se.v_p_policy) = acc.estimate(0);
  std::tie(out.mean.v_p_default, out.se.v_p_default) = acc.estimate(1);
  std::tie(out.mean.v_primary, out.se.v_primary) = acc.estimate(2);
  std::tie(out.mean.v_secondary, out.se.v_secondary) = acc.estimate(3);
  return out;
}

TermEstimate mc_term_oracle(const AnalyticParams& p, std::int64_t n_rounds, std::uint64_t seed) {
  require_rounds(n_rounds);
  ChainSampler chain(p, seed);
  constexpr std::size_t kTerms = 16;
  BatchMeans acc(kTerms, n_rounds);
  const double q = 1.0 - p.r2;

  for (std::int64_t t = 0; t < n_rounds; ++t) {
    const Draw d = chain.next();
    const double R = d.reserved ? 1.0 : 0.0;
    const double open = 1.0 - R;
    const double Rn = d.reserved_next ? 1.0 : 0.0;
    const double sec_wins = d.xp > d.x ? 1.0 : 0.0;
    const double pri_wins = d.xp < d.x ? 1.0 : 0.0;
    const double values[kTerms] = {
        R * (1.0 - p.r1) * d.x_prev,
        R * (1.0 - Rn) * q * d.x,
        R * q * d.y,
        open * Rn * q * d.xp,
        open * (1.0 - Rn) * sec_wins * q * d.xp,
        open * Rn * q * d.y,
        open * (1.0 - Rn) * sec_wins * q * d.y,
        open * (1.0 - Rn) * pri_wins * q * d.x,
        open * (1.0 - Rn) * pri_wins * q * d.y,
        R * p.r1 * d.x_prev,
        R * (1.0 - Rn) * p.r2 * d.x,
        R * p.r2 * d.y,
        open * (1.0 - Rn) * pri_wins * p.r2 * d.x,
        open * (1.0 - Rn) * pri_wins * p.r2 * d.y,
        open * (Rn + (1.0 - Rn) * sec_wins) * p.r2 * d.xp,
        open * (Rn + (1.0 - Rn) * sec_wins) * p.r2 * d.y,
    };
    for (std::size_t i = 0; i < kTerms; ++i) acc.add(i, values[i]);
    acc.end_round();
  }
  acc.finish();

  TermEstimate out;
  auto fill = [&acc](std::size_t i, double& mean, double& se) { std::tie(mean, se) = acc.estimate(i); };
  fill(0, out.policy.a_reserved_bundle, out.policy_se.a_reserved_bundle);
  fill(1, out.policy.a_unreserved_private, out.policy_se.a_unreserved_private);
  fill(2, out.policy.a_public, out.policy_se.a_public);
  fill(3, out.policy.t_secondary_x_reserved_next, out.policy_se.t_secondary_x_reserved_next);
  fill(4, out.policy.t_secondary_x_wins, out.policy_se.t_secondary_x_wins);
  fill(5, out.policy.t_secondary_y_reserved_next, out.policy_se.t_secondary_y_reserved_next);
  fill(6, out.policy.t_secondary_y_wins, out.policy_se.t_secondary_y_wins);
  fill(7, out.policy.t_primary_x_wins, out.policy_se.t_primary_x_wins);
  fill(8, out.policy.t_primary_y_wins, out.policy_se.t_primary_y_wins);
  fill(9, out.primary.reserved_bundle, out.primary_se.reserved_bundle);
  fill(10, out.primary.reserved_round_x, out.primary_se.reserved_round_x);
  fill(11, out.primary.reserved_round_y, out.primary_se.reserved_round_y);
  fill(12, out.primary.open_round_x, out.primary_se.open_round_x);
  fill(13, out.primary.open_round_y, out.primary_se.open_round_y);
  fill(14, out.secondary.x_wins, out.secondary_se.x_wins);
  fill(15, out.secondary.y_wins, out.secondary_se.y_wins);
  return out;
}

double fixed_point_residual(double mu2, double rho, double r1, double r2, double mu3) {
  const auto p = AnalyticParams::from_mu2(mu2, mu3, rho, r1, r2);
  return expected_primary_builder_reward(p) * mu2 - expected_secondary_builder_reward(p) * p.mu1;
}

double fixed_point_ratio_gap(double mu2, double rho, double r1, double r2, double mu3) {
  const auto p = AnalyticParams::from_mu2(mu2, mu3, rho, r1, r2);
  const double vp = expected_primary_builder_reward(p);
  const double vs = expected_secondary_builder_reward(p);
  return std::abs(vs / (vp + vs) - mu2);
}

FixedPointResult solve_fixed_point(double rho, double r1, double r2, double mu3, double tol) {
  auto f = [&](double mu2) { return fixed_point_residual(mu2, rho, r1, r2, mu3); };
  FixedPointResult out;
  constexpr double kStep = 1e-4;
  constexpr int kSteps = 4999;  // grid 0.5, 0.4999, ..., 0.0001

  double hi = 0.5;
  double f_hi = f(hi);
  std::optional<std::pair<double, double>> bracket;
  for (int i = 1; i <= kSteps; ++i) {
    const double lo = 0.5 - i * kStep;
    const double f_lo = f(lo);
    if (f_lo == 0.0) {
      out.found = true;
      out.mu2_star = lo;
      out.residual = 0.0;
      out.bracket = {lo, lo};
      return out;
    }
    if ((f_lo < 0.0) != (f_hi < 0.0)) {
      bracket = {lo, hi};
      break;
    }
    hi = lo;
    f_hi = f_lo;
  }
  if (!bracket) {
    out.message = "no interior fixed point at these parameters";
    return out;
  }

  out.bracket = *bracket;
  double lo = bracket->first;
  hi = bracket->second;
  double f_lo = f(lo);
  double mid = 0.5 * (lo + hi);
  double f_mid = f(mid);
  int it = 0;
  while (it < 200) {
    ++it;
    mid = 0.5 * (lo + hi);
    f_mid = f(mid);
    if (f_mid == 0.0 || (hi - lo) < 1e-15) break;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
    if (std::abs(f_mid) < tol && (hi - lo) < 1e-12) break;
  }
  out.found = std::abs(f_mid) < tol;
  out.mu2_star = mid;
  out.residual = f_mid;
  out.iterations = it;
  if (!out.found) out.message = "bisection did not reach tolerance";
  return out;
}

double existence_poly(double mu2) { return -3.0 * mu2 * mu2 + 2.0 * mu2 * mu2 * mu2 + mu2; }

double existence_best_mu2() { return (3.0 - std::sqrt(3.0)) / 6.0; }

double existence_rho_bound(double mu2, double mu3) {
  const double c = existence_poly(mu2);
  const double e = std::exp(1.0);
  return std::max({mu3 - 2.0, 0.5 * (1.25 + 0.5 * mu3) - 0.5 * std::log(c * e / 8.0),
                   0.25 * (0.25 - mu3) - 0.25 * std::log(c * e / 4.0), -0.25 * std::log(c / 3.0),
                   0.25 * (0.75 + 0.5 * mu3) - 0.25 * std::log(c * e / 8.0)});
}

double policy_gain_simplified(double mu2, double rho, double r2) {
  // Exponents are combined before evaluation so small mu2 does not overflow.
  const double mu1 = 1.0 - mu2;
  const double lead = -(1.0 + mu2) * rho / (mu1 * mu2);
  return std::exp(-2.0 * rho / mu1) * mu2 * (r2 - 1.0) - mu2 * mu2 * (r2 - 1.0) * std::exp(lead) +
         std::exp(-rho / mu1) * (1.0 - mu2 + mu2 * mu2 * (r2 - 1.0) + rho);
}

double symmetric_residual_simplified(double rho, double r2, double mu3) {
  const double outer = -0.25 - 0.5 * mu3 - 0.5 * rho;
  return r2 * (outer * std::exp(-6.0 * rho) + (1.5 * mu3 + 0.5 + 0.5 * rho) * std::exp(-4.0 * rho) +
               outer * std::exp(-2.0 * rho));
}

// ---------------------------------------------------------------- checks

bool CheckReport::passed() const {
  return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return r.pass; });
}

std::vector<CheckRecord> CheckReport::failures() const {
  std::vector<CheckRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [](const CheckRecord& r) { return !r.pass; });
  return out;
}

std::vector<AnalyticParams> random_oracle_grid(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AnalyticParams> grid;
  grid.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu2 = 0.05 + 0.9 * rng.uniform();
    const double rho = 0.1 + 4.9 * rng.uniform();
    const double mu3 = 0.1 + 1.9 * rng.uniform();
    const double r1 = 0.9 * rng.uniform();
    const double r2 = 0.01 + 0.49 * rng.uniform();
    grid.push_back(AnalyticParams::from_mu2(mu2, mu3, rho, r1, r2));
  }
  return grid;
}

CheckReport check_oracle_grid(const std::vector<AnalyticParams>& grid, std::int64_t n_rounds, std::uint64_t seed,
                              double k_se, const ClosedForms& forms) {
  std::vector<std::future<OracleEstimate>> jobs;
  jobs.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    jobs.push_back(std::async(std::launch::async, mc_oracle, grid[i], n_rounds, derive_seed(seed, i)));

  CheckReport report{"oracle_grid", {}};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const OracleEstimate est = jobs[i].get();
    const ExpectedRewards cf = forms(grid[i]);
    auto add = [&](const char* name, double value, double mean, double se) {
      const double allowed = std::max(k_se * se, 1e-12);
      report.records.push_back({name, grid[i], value, mean, se, std::abs(value - mean) <= allowed});
    };
    add("v_p_policy", cf.v_p_policy, est.mean.v_p_policy, est.se.v_p_policy);
    add("v_p_default", cf.v_p_default, est.mean.v_p_default, est.se.v_p_default);
    add("v_primary", cf.v_primary, est.mean.v_primary, est.se.v_primary);
    add("v_secondary", cf.v_secondary, est.mean.v_secondary, est.se.v_secondary);
  }
  return report;
}

std::vector<Lemma1Point> random_lemma1_grid(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Lemma1Point> grid;
  grid.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu2 = 0.01 + 0.48 * rng.uniform();
    const double rho = mu2 + 0.01 + 4.99 * rng.uniform();
    const double mu3 = 0.1 + 1.9 * rng.uniform();
    const double r2 = 0.01 + 0.49 * rng.uniform();
    grid.push_back({mu2, rho, mu3, r2});
  }
  return grid;
}

CheckReport check_lemma1(const std::vector<Lemma1Point>& grid, double tol) {
  CheckReport report{"lemma1", {}};
  for (const auto& g : grid) {
    if (!(g.mu2 < 0.5) || !(g.rho > g.mu2)) continue;
    const auto p = AnalyticParams::from_mu2(g.mu2, g.mu3, g.rho, 0.0, g.r2);
    const double policy = expected_validator_reward_policy(p);
    const double dflt = expected_validator_reward_default(p);
    report.records.push_back({"policy_exceeds_default", p, policy, dflt, 0.0, policy > dflt});
    const double direct = policy - dflt;
    const double simplified = policy_gain_simplified(g.mu2, g.rho, g.r2);
    report.records.push_back(
        {"simplified_difference", p, direct, simplified, tol, std::abs(direct - simplified) <= tol});
  }
  return report;
}

CheckReport check_lemma2(const std::vector<Lemma2Point>& grid) {
  CheckReport report{"lemma2", {}};
  const double bound = std::log(3.0) / 2.0;
  for (const auto& g : grid) {
    if (!(g.rho > bound)) continue;
    const auto p = AnalyticParams::from_mu2(0.5, g.mu3, g.rho, 0.0, g.r2);
    const double res = fixed_point_residual(0.5, g.rho, 0.0, g.r2, g.mu3);
    report.records.push_back({"residual_negative", p, res, 0.0, 0.0, res < 0.0});
  }
  return report;
}

CheckReport check_symmetric_residual_simplified(const std::vector<Lemma2Point>& grid, double tol) {
  CheckReport report{"symmetric_residual_simplified", {}};
  for (const auto& g : grid) {
    const auto p = AnalyticParams::from_mu2(0.5, g.mu3, g.rho, 0.0, g.r2);
    const double res = fixed_point_residual(0.5, g.rho, 0.0, g.r2, g.mu3);
    const double simplified = symmetric_residual_simplified(g.rho, g.r2, g.mu3);
    report.records.push_back({"simplified_residual", p, res, simplified, tol, std::abs(res - simplified) <= tol});
  }
  return report;
}

}  // namespace flashback::analytics
