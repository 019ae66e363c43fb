#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace flashback {

using Round = std::int64_t;

struct BuilderId {
  std::uint32_t value{0};
  friend auto operator<=>(const BuilderId&, const BuilderId&) = default;
};

// Builder 0 always runs the Flashback policy; 1..n are default builders.
inline constexpr BuilderId kPrimary{0};

struct TxId {
  std::uint64_t value{0};
  friend auto operator<=>(const TxId&, const TxId&) = default;
};

struct UserId {
  std::uint32_t value{0};
  friend auto operator<=>(const UserId&, const UserId&) = default;
};

enum class TxKind { private_tx, public_tx };

struct Transaction {
  TxId id;
  TxKind kind{TxKind::public_tx};
  double value{0.0};
  Round created_round{0};
  std::int64_t ttl{1};
  std::optional<UserId> origin_user;
  std::optional<BuilderId> assigned_builder;

  // First round at which the transaction can no longer be confirmed.
  Round expiry_round() const noexcept { return created_round + ttl; }
  bool valid_at(Round t) const noexcept { return t >= created_round && t < expiry_round(); }
};

bool satisfies_invariants(const Transaction& tx) noexcept;

enum class ProposerBidPolicy { greedy, random_half, proportional };

// Which part of a proposer's take feeds the expected-reward estimate used for
// bid thresholds. Public transactions reach every builder, so only the private
// portion differs between candidate blocks.
enum class EstimateBasis { private_value, block_value };

struct ScoreWeights {
  double w_r{1.0};
  double w_d{0.1};
  double w_m{-0.1};
  friend bool operator==(const ScoreWeights&, const ScoreWeights&) = default;
};

// Mean private fee relative to the public mean such that `private_fraction`
// of transactions carry `fee_share` of all fees.
constexpr double calibrated_fee_ratio(double private_fraction, double fee_share) {
  return fee_share * (1.0 - private_fraction) / ((1.0 - fee_share) * private_fraction);
}

struct SimConfig {
  std::int64_t n_users{100};
  double q{0.03};
  std::int64_t k_public{100};
  std::int64_t ttl{10};
  std::int64_t block_size{100};
  std::int64_t bid_count{3};
  double mean_private_fee{calibrated_fee_ratio(0.03, 0.10)};
  double mean_public_fee{1.0};
  double r2{0.02};
  double epsilon{0.05};
  ScoreWeights score_weights{};
  std::int64_t window{3200};
  double feedback_fraction{0.1};
  std::vector<double> initial_scores{1.0, 1.0};
  std::int64_t initial_knowledge_length{1};
  std::int64_t n_secondary_builders{1};
  ProposerBidPolicy proposer_bid_policy{ProposerBidPolicy::greedy};
  std::int64_t rounds{10000};
  std::uint64_t seed{1};

  // Policy switches used by the experiment presets.
  bool bidding{true};                 // false == threshold at +infinity
  std::optional<double> fixed_r1;     // bypasses the bid-rate formula when set
  bool uniform_routing{false};
  EstimateBasis estimate_basis{EstimateBasis::private_value};
  double score_floor{1e-6};

  std::size_t builder_count() const noexcept {
    return static_cast<std::size_t>(n_secondary_builders) + 1;
  }

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct FieldError {
  std::string field;
  std::string message;
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<FieldError> errors);
  ConfigError(std::string field, std::string message);
  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

class ValidatedConfig {
 public:
  const SimConfig& get() const noexcept { return config_; }
  const SimConfig* operator->() const noexcept { return &config_; }

 private:
  friend ValidatedConfig validate_config(SimConfig config);
  explicit ValidatedConfig(SimConfig config) : config_(std::move(config)) {}
  SimConfig config_;
};

// Every violated invariant, keyed by field name. Empty means valid.
std::vector<FieldError> config_errors(const SimConfig& config);

// Throws ConfigError listing all violations.
ValidatedConfig validate_config(SimConfig config);

struct AnalyticParams {
  double mu1{0.5};
  double mu2{0.5};
  double mu3{0.5};
  double rho{1.0};  // may be +infinity
  double r1{0.0};
  double r2{0.02};

  static AnalyticParams from_mu2(double mu2, double mu3, double rho, double r1, double r2) {
    return AnalyticParams{1.0 - mu2, mu2, mu3, rho, r1, r2};
  }
};

std::vector<FieldError> analytic_param_errors(const AnalyticParams& p);
void validate(const AnalyticParams& p);  // throws ConfigError

struct RoundLog {
  Round round{0};
  BuilderId winning_builder;
  bool reservation_flag{false};
  double block_value{0.0};
  double builder_take{0.0};
  double proposer_take{0.0};
  // Part of proposer_take paid out of private transactions.
  double proposer_private_take{0.0};
  std::vector<double> scores_after;
  bool bid_issued{false};
  bool bid_accepted{false};
  std::optional<double> bid_value;
  std::optional<double> bid_rate;
  std::vector<std::int64_t> expired_count;
};

std::string builder_name(BuilderId id);
std::string to_string(ProposerBidPolicy policy);
std::string to_string(EstimateBasis basis);
ProposerBidPolicy parse_proposer_bid_policy(const std::string& name);
EstimateBasis parse_estimate_basis(const std::string& name);

}  // namespace flashback
