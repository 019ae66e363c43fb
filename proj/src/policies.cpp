#include "flashback/policies.hpp"

#include <algorithm>

namespace flashback {

namespace {

bool higher_fee(const Transaction* a, const Transaction* b) {
  if (a->value != b->value) return a->value > b->value;
  return a->id < b->id;
}

void add_tx(CandidateBlock& block, const Transaction& tx, double builder_rate) {
  const double builder_part = builder_rate * tx.value;
  const double proposer_part = tx.value - builder_part;
  block.txs.push_back(tx);
  block.total_value += tx.value;
  block.builder_value += builder_part;
  block.proposer_value += proposer_part;
  if (tx.kind == TxKind::private_tx) block.proposer_private_value += proposer_part;
}

void fill_top(CandidateBlock& block, std::vector<const Transaction*>& pool, std::size_t slots, double r2) {
  const std::size_t take = std::min(slots, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), higher_fee);
  for (std::size_t i = 0; i < take; ++i) add_tx(block, *pool[i], r2);
}

}  // namespace

std::vector<TxId> CandidateBlock::tx_ids() const {
  std::vector<TxId> ids;
  ids.reserve(txs.size());
  for (const auto& tx : txs) ids.push_back(tx.id);
  return ids;
}

std::vector<Transaction> select_bid_set(std::span<const Transaction> mempool, Round t, std::int64_t bid_count,
                                        const AuctionedSet& auctioned) {
  std::vector<const Transaction*> eligible;
  for (const auto& tx : mempool) {
    if (tx.kind != TxKind::private_tx) continue;
    if (tx.expiry_round() < t + 2) continue;
    if (auctioned.contains(tx.id.value)) continue;
    eligible.push_back(&tx);
  }
  const std::size_t take = std::min<std::size_t>(eligible.size(), static_cast<std::size_t>(std::max<std::int64_t>(bid_count, 0)));
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take), eligible.end(), higher_fee);
  std::vector<Transaction> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*eligible[i]);
  return out;
}

double estimate_expected_proposer_reward(std::span<const RoundLog> logs, std::int64_t window, Round t,
                                         EstimateBasis basis) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& log : logs) {
    if (log.round < t - window - 1 || log.round > t - 1) continue;
    if (log.reservation_flag) continue;
    sum += basis == EstimateBasis::block_value ? log.proposer_take : log.proposer_private_take;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double compute_threshold(double e_hat, double epsilon) { return (1.0 + epsilon) * e_hat; }

std::optional<double> compute_bid_rate(double total_value, double e_hat, double epsilon, double r2) {
  if (!(total_value > compute_threshold(e_hat, epsilon))) return std::nullopt;
  const double r1 = (total_value - (1.0 + epsilon) * (1.0 - r2) * e_hat) / total_value;
  if (!(r1 >= 0.0 && r1 < 1.0)) return std::nullopt;
  return r1;
}

std::optional<Bid> flashback_bid(BuilderId bidder, std::span<const Transaction> mempool, const AuctionedSet& auctioned,
                                 double e_hat, const SimConfig& config, Round t) {
  if (!config.bidding) return std::nullopt;
  const auto set = select_bid_set(mempool, t, config.bid_count, auctioned);
  if (set.empty()) return std::nullopt;

  Bid bid;
  bid.bidder = bidder;
  bid.target_round = t + 1;
  for (const auto& tx : set) {
    bid.tx_ids.push_back(tx.id);
    bid.total_value += tx.value;
  }
  if (config.fixed_r1) {
    if (!(e_hat > 0.0) || !(bid.total_value > compute_threshold(e_hat, config.epsilon))) return std::nullopt;
    bid.r1 = *config.fixed_r1;
  } else {
    const auto r1 = compute_bid_rate(bid.total_value, e_hat, config.epsilon, config.r2);
    if (!r1) return std::nullopt;
    bid.r1 = *r1;
  }
  bid.proposer_payout_if_accepted = (1.0 - bid.r1) * bid.total_value;
  return bid;
}

std::optional<Bid> flashback_bid(BuilderId bidder, std::span<const Transaction> mempool, const AuctionedSet& auctioned,
                                 std::span<const RoundLog> logs, const SimConfig& config, Round t) {
  const double e_hat = estimate_expected_proposer_reward(logs, config.window, t, config.estimate_basis);
  return flashback_bid(bidder, mempool, auctioned, e_hat, config, t);
}

bool proposer_decide_bid(ProposerBidPolicy policy, const Bid& bid, double e_hat, Rng& rng) {
  const double payout = bid.proposer_payout_if_accepted;
  switch (policy) {
    case ProposerBidPolicy::greedy:
      return payout > e_hat;
    case ProposerBidPolicy::random_half:
      return rng.bernoulli(0.5);
    case ProposerBidPolicy::proportional:
      return rng.bernoulli(payout / (payout + e_hat));
  }
  throw ConfigError("proposer_bid_policy", "unknown policy");
}

CandidateBlock build_block_default(BuilderId builder, std::span<const Transaction> private_mempool,
                                   std::span<const Transaction> public_pool, std::int64_t block_size, double r2) {
  CandidateBlock block;
  block.builder = builder;
  std::vector<const Transaction*> pool;
  pool.reserve(private_mempool.size() + public_pool.size());
  for (const auto& tx : private_mempool) pool.push_back(&tx);
  for (const auto& tx : public_pool) pool.push_back(&tx);
  fill_top(block, pool, static_cast<std::size_t>(block_size), r2);
  return block;
}

CandidateBlock build_block_with_reservation(BuilderId builder, std::span<const Transaction> reserved,
                                            std::span<const Transaction> private_mempool,
                                            std::span<const Transaction> public_pool, std::int64_t block_size,
                                            double r1, double r2, Round t) {
  if (static_cast<std::int64_t>(reserved.size()) > block_size)
    throw ProtocolViolation("reservation larger than the block");

  std::unordered_set<std::uint64_t> reserved_ids;
  for (const auto& tx : reserved) {
    if (!tx.valid_at(t)) throw ProtocolViolation("reserved transaction " + std::to_string(tx.id.value) + " expired");
    const bool pending = std::any_of(private_mempool.begin(), private_mempool.end(),
                                     [&](const Transaction& m) { return m.id == tx.id; });
    if (!pending)
      throw ProtocolViolation("reserved transaction " + std::to_string(tx.id.value) + " no longer pending");
    if (!reserved_ids.insert(tx.id.value).second)
      throw ProtocolViolation("reserved transaction " + std::to_string(tx.id.value) + " listed twice");
  }

  CandidateBlock block;
  block.builder = builder;
  for (const auto& tx : reserved) {
    add_tx(block, tx, r1);
    block.reserved_ids.push_back(tx.id);
  }

  std::vector<const Transaction*> pool;
  pool.reserve(private_mempool.size() + public_pool.size());
  for (const auto& tx : private_mempool)
    if (!reserved_ids.contains(tx.id.value)) pool.push_back(&tx);
  for (const auto& tx : public_pool) pool.push_back(&tx);
  fill_top(block, pool, static_cast<std::size_t>(block_size) - reserved.size(), r2);
  return block;
}

}  // namespace flashback
