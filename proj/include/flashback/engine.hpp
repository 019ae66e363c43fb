#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "flashback/domain.hpp"
#include "flashback/policies.hpp"
#include "flashback/rng.hpp"

namespace flashback {

// Fixed-capacity moving window with a running sum.
class MovingWindow {
 public:
  explicit MovingWindow(std::size_t capacity = 1) : capacity_(capacity) {}
  void push(double x);
  double mean() const { return values_.empty() ? 0.0 : sum_ / static_cast<double>(values_.size()); }
  std::size_t size() const { return values_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
  double sum_{0.0};
  std::size_t pushes_since_resum_{0};
};

enum class BuilderKind { flashback, standard };

struct Reservation {
  Round round{0};
  std::vector<TxId> tx_ids;
  double r1{0.0};
};

struct BuilderState {
  BuilderId id;
  BuilderKind kind{BuilderKind::standard};
  std::vector<Transaction> private_mempool;
  std::optional<Reservation> reservation;
  AuctionedSet auctioned;
  MovingWindow reward_window;
  MovingWindow inclusion_delay_window;
  MovingWindow expiry_window;
};

struct ScoreBoard {
  std::vector<double> score;
  std::vector<double> f_r;
  std::vector<double> f_d;
  std::vector<double> f_m;
};

ScoreBoard update_scores(const std::vector<BuilderState>& builders, const ScoreWeights& weights, double floor);

struct RoundTraffic {
  std::vector<Transaction> private_txs;
  std::vector<Transaction> public_txs;
};

// Draw order: for each user, one uniform for emission and, if emitted, one
// for the value and one for routing; then one value per public transaction.
RoundTraffic generate_round_transactions(Rng& rng, const SimConfig& config, Round round, const ScoreBoard& scores,
                                         std::uint64_t& next_tx_id);

class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct WorldState {
  SimConfig config;
  Round round{0};
  std::vector<BuilderState> builders;
  ScoreBoard scores;
  std::vector<RoundLog> logs;
  std::uint64_t next_tx_id{0};
  std::unordered_set<std::uint64_t> confirmed;
  std::vector<double> user_refunds;  // (r2 - r1)+ share of reserved fees, per user

  static WorldState initial(const ValidatedConfig& config);
};

// One round. Throws InvariantViolation if conservation, commitment, expiry
// or uniqueness checks fail.
RoundLog step(WorldState& state, Rng& rng);

struct SimResult {
  SimConfig config;
  std::vector<RoundLog> logs;
  std::vector<std::int64_t> blocks_won;
  std::vector<double> block_share;
  std::vector<double> cumulative_builder_reward;
  std::vector<double> user_refunds;
  std::vector<double> proposer_rewards;  // per round
  std::vector<double> rolling_primary_share;
  std::optional<Round> convergence_round;
  std::int64_t bids_issued{0};
  std::int64_t bids_accepted{0};

  // Fraction of rounds >= from_round won by `builder`.
  double share_from(Round from_round, BuilderId builder = kPrimary) const;
  // Mean builder take over the blocks `builder` won.
  double mean_take_per_block(BuilderId builder) const;
};

inline constexpr std::int64_t kRollingWindow = 500;
inline constexpr double kConvergenceBand = 0.02;

SimResult run(const ValidatedConfig& config);

// First round after which the rolling share stays within band of its final value.
std::optional<Round> convergence_round(const std::vector<double>& rolling, double band = kConvergenceBand);

void write_round_csv(std::ostream& out, const SimResult& result);
std::string round_csv_header(std::size_t builder_count);

}  // namespace flashback
