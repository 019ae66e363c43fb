#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "flashback/domain.hpp"
#include "flashback/rng.hpp"

namespace flashback {

struct Bid {
  BuilderId bidder;
  Round target_round{0};
  std::vector<TxId> tx_ids;
  double total_value{0.0};
  double r1{0.0};
  double proposer_payout_if_accepted{0.0};
};

struct CandidateBlock {
  BuilderId builder;
  std::vector<Transaction> txs;
  std::vector<TxId> reserved_ids;
  double total_value{0.0};
  double proposer_value{0.0};
  double builder_value{0.0};
  double proposer_private_value{0.0};  // proposer's share of private fees

  std::vector<TxId> tx_ids() const;
};

class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Ids of transactions that were ever part of a reservation.
using AuctionedSet = std::unordered_set<std::uint64_t>;

// Highest-fee private transactions still valid at t+1 and never auctioned.
// Ties go to the smaller id.
std::vector<Transaction> select_bid_set(std::span<const Transaction> mempool, Round t, std::int64_t bid_count,
                                        const AuctionedSet& auctioned = {});

// Filtered mean over rounds t-W-1 .. t-1 skipping rounds that served a
// reservation. Zero when nothing qualifies.
double estimate_expected_proposer_reward(std::span<const RoundLog> logs, std::int64_t window, Round t,
                                         EstimateBasis basis = EstimateBasis::block_value);

double compute_threshold(double e_hat, double epsilon);

// Empty when total_value does not clear (1+epsilon) e_hat or the resulting
// rate would not lie in [0, 1).
std::optional<double> compute_bid_rate(double total_value, double e_hat, double epsilon, double r2);

// Bid for round t+1 given the estimate e_hat. Honors config.bidding and
// config.fixed_r1.
std::optional<Bid> flashback_bid(BuilderId bidder, std::span<const Transaction> mempool, const AuctionedSet& auctioned,
                                 double e_hat, const SimConfig& config, Round t);

// Same, computing e_hat from the public history first.
std::optional<Bid> flashback_bid(BuilderId bidder, std::span<const Transaction> mempool, const AuctionedSet& auctioned,
                                 std::span<const RoundLog> logs, const SimConfig& config, Round t);

// greedy draws nothing; the randomized policies draw one uniform.
bool proposer_decide_bid(ProposerBidPolicy policy, const Bid& bid, double e_hat, Rng& rng);

// Top K by fee across both pools, all fees split at r2.
CandidateBlock build_block_default(BuilderId builder, std::span<const Transaction> private_mempool,
                                   std::span<const Transaction> public_pool, std::int64_t block_size, double r2);

// Reserved transactions first at r1, then the best of everything else at r2.
// Every reserved transaction must still be in the mempool and valid at t.
CandidateBlock build_block_with_reservation(BuilderId builder, std::span<const Transaction> reserved,
                                            std::span<const Transaction> private_mempool,
                                            std::span<const Transaction> public_pool, std::int64_t block_size,
                                            double r1, double r2, Round t);

}  // namespace flashback
