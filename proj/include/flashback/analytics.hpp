#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flashback/domain.hpp"

// Expected per-round rewards of the two-builder reservation model, where the
// primary builder's private flow X ~ exp(mu1), the secondary's X' ~ exp(mu2),
// public value Y ~ exp(mu3) (all mean-parameterized) and a reservation for
// round t+1 is made iff X[t] > rho.
namespace flashback::analytics {

struct ExpectedRewards {
  double v_p_policy{0.0};
  double v_p_default{0.0};
  double v_primary{0.0};
  double v_secondary{0.0};
};

// Proposer reward sub-expectations under the reservation policy. a_* terms
// are rounds with R[t] = 1, t_* terms rounds with R[t] = 0.
struct PolicyTerms {
  double a_reserved_bundle{0.0};    // 1{R[t]}(1-r1)X[t-1]
  double a_unreserved_private{0.0}; // 1{R[t]}(1-R[t+1])(1-r2)X[t]
  double a_public{0.0};             // 1{R[t]}(1-r2)Y[t]
  double t_secondary_x_reserved_next{0.0};  // 1{!R[t]}1{R[t+1]}(1-r2)X'[t]
  double t_secondary_x_wins{0.0};           // 1{!R[t]}1{!R[t+1]}1{X'>X}(1-r2)X'[t]
  double t_secondary_y_reserved_next{0.0};  // 1{!R[t]}1{R[t+1]}(1-r2)Y[t]
  double t_secondary_y_wins{0.0};           // 1{!R[t]}1{!R[t+1]}1{X'>X}(1-r2)Y[t]
  double t_primary_x_wins{0.0};             // 1{!R[t]}1{!R[t+1]}1{X'<X}(1-r2)X[t]
  double t_primary_y_wins{0.0};             // 1{!R[t]}1{!R[t+1]}1{X'<X}(1-r2)Y[t]

  double reserved_sum() const { return a_reserved_bundle + a_unreserved_private + a_public; }
  double unreserved_sum() const {
    return t_secondary_x_reserved_next + t_secondary_x_wins + t_secondary_y_reserved_next +
           t_secondary_y_wins + t_primary_x_wins + t_primary_y_wins;
  }
  std::vector<std::pair<std::string, double>> named() const;
};

struct PrimaryTerms {
  double reserved_bundle{0.0};     // 1{R[t]} r1 X[t-1]
  double reserved_round_x{0.0};    // 1{R[t]}(1-R[t+1]) r2 X[t]
  double reserved_round_y{0.0};    // 1{R[t]} r2 Y[t]
  double open_round_x{0.0};        // 1{!R[t]}1{!R[t+1]}1{X'<X} r2 X[t]
  double open_round_y{0.0};        // 1{!R[t]}1{!R[t+1]}1{X'<X} r2 Y[t]

  double sum() const { return reserved_bundle + reserved_round_x + reserved_round_y + open_round_x + open_round_y; }
  std::vector<std::pair<std::string, double>> named() const;
};

struct SecondaryTerms {
  double x_wins{0.0};  // 1{!R[t]}(1{R[t+1]} + 1{!R[t+1]}1{X'>X}) r2 X'[t]
  double y_wins{0.0};  // same event, r2 Y[t]

  double sum() const { return x_wins + y_wins; }
  std::vector<std::pair<std::string, double>> named() const;
};

PolicyTerms policy_terms(const AnalyticParams& p);
PrimaryTerms primary_terms(const AnalyticParams& p);
SecondaryTerms secondary_terms(const AnalyticParams& p);

double expected_validator_reward_policy(const AnalyticParams& p);
// Conditioned on R[t] = 0. At rho = +inf this is the unconditioned duel value.
double expected_validator_reward_default(const AnalyticParams& p);
double expected_primary_builder_reward(const AnalyticParams& p);
double expected_secondary_builder_reward(const AnalyticParams& p);
ExpectedRewards expected_rewards(const AnalyticParams& p);

struct OracleEstimate {
  ExpectedRewards mean;
  ExpectedRewards se;
  std::int64_t rounds{0};
  std::int64_t default_rounds{0};  // rounds with R[t] = 0
};

// Direct simulation of the chain. Standard errors use batch means because
// consecutive rounds share X[t]. Throws std::invalid_argument if n_rounds < 1e4.
OracleEstimate mc_oracle(const AnalyticParams& p, std::int64_t n_rounds, std::uint64_t seed);

struct TermEstimate {
  PolicyTerms policy;
  PolicyTerms policy_se;
  PrimaryTerms primary;
  PrimaryTerms primary_se;
  SecondaryTerms secondary;
  SecondaryTerms secondary_se;
};

// Per-sub-term indicator expectations, estimated by simulation.
TermEstimate mc_term_oracle(const AnalyticParams& p, std::int64_t n_rounds, std::uint64_t seed);

// E[V_primary] mu2 - E[V_secondary] mu1 with mu1 = 1 - mu2.
double fixed_point_residual(double mu2, double rho, double r1, double r2, double mu3);

// |E[V_secondary] / (E[V_primary] + E[V_secondary]) - mu2|.
double fixed_point_ratio_gap(double mu2, double rho, double r1, double r2, double mu3);

struct FixedPointResult {
  bool found{false};
  double mu2_star{0.0};
  double residual{0.0};
  int iterations{0};
  std::pair<double, double> bracket{0.0, 0.0};
  std::string message;
};

// Scans mu2 downward from 0.5 on a 1e-4 grid and bisects the first sign
// change. That is the root adjacent to the symmetric split. Absence of a sign
// change is reported through `found`, not thrown.
FixedPointResult solve_fixed_point(double rho, double r1, double r2, double mu3, double tol = 1e-9);

double existence_poly(double mu2);  // -3 mu2^2 + 2 mu2^3 + mu2
// Lower bound on rho above which an interior fixed point exists (r1 = 0).
double existence_rho_bound(double mu2, double mu3);
// mu2 maximizing existence_poly on (0, 0.5): (3 - sqrt 3) / 6.
double existence_best_mu2();

// E[V_p^policy] - E[V_p^default] at r1 = 0, mu1 = 1 - mu2, as a single
// simplified expression (independent of mu3).
double policy_gain_simplified(double mu2, double rho, double r2);
// Residual at mu2 = 1/2, r1 = 0 in simplified form.
double symmetric_residual_simplified(double rho, double r2, double mu3);

// ---------------------------------------------------------------- checks

struct CheckRecord {
  std::string check;
  AnalyticParams point;
  double value{0.0};      // implementation
  double reference{0.0};  // oracle or simplified expression
  double scale{0.0};      // standard error or tolerance
  bool pass{false};
};

struct CheckReport {
  std::string name;
  std::vector<CheckRecord> records;
  bool passed() const;
  std::vector<CheckRecord> failures() const;
};

using ClosedForms = std::function<ExpectedRewards(const AnalyticParams&)>;

// mu2 in (0.05,0.95), rho in (0.1,5), mu3 in (0.1,2), r1 in [0,0.9], r2 in (0.01,0.5).
std::vector<AnalyticParams> random_oracle_grid(std::size_t n, std::uint64_t seed);

// Each closed form must lie within k_se standard errors of the oracle.
CheckReport check_oracle_grid(const std::vector<AnalyticParams>& grid, std::int64_t n_rounds,
                              std::uint64_t seed, double k_se = 4.0, const ClosedForms& forms = expected_rewards);

struct Lemma1Point {
  double mu2, rho, mu3, r2;
};
// Points outside the hypothesis (mu2 >= 0.5 or rho <= mu2) are skipped.
CheckReport check_lemma1(const std::vector<Lemma1Point>& grid, double tol = 1e-10);
std::vector<Lemma1Point> random_lemma1_grid(std::size_t n, std::uint64_t seed);

struct Lemma2Point {
  double rho, mu3, r2;
};
// Points with rho <= ln(3)/2 are skipped.
CheckReport check_lemma2(const std::vector<Lemma2Point>& grid);

// Residual at mu2 = 1/2 against its simplified form.
CheckReport check_symmetric_residual_simplified(const std::vector<Lemma2Point>& grid, double tol = 1e-10);

}  // namespace flashback::analytics
