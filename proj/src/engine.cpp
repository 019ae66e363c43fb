#include "flashback/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>

#include "flashback/config_io.hpp"

namespace flashback {

namespace {

constexpr double kConservationTol = 1e-9;

void check(bool ok, const std::string& what, Round t) {
  if (!ok) throw InvariantViolation("round " + std::to_string(t) + ": " + what);
}

// Expected per-round reward of one builder when blocks are split evenly; sets
// the scale of the synthetic starting history.
double nominal_builder_reward(const SimConfig& c) {
  const double publics = static_cast<double>(std::min(c.k_public, c.block_size)) * c.mean_public_fee;
  const double privates = static_cast<double>(c.n_users) * c.q * c.mean_private_fee;
  return c.r2 * (publics + privates) / static_cast<double>(c.builder_count());
}

}  // namespace

void MovingWindow::push(double x) {
  values_.push_back(x);
  sum_ += x;
  if (values_.size() > capacity_) {
    sum_ -= values_.front();
    values_.pop_front();
  }
  // Periodic exact re-summation keeps the running sum from drifting.
  if (++pushes_since_resum_ >= capacity_) {
    sum_ = 0.0;
    for (double v : values_) sum_ += v;
    pushes_since_resum_ = 0;
  }
}

ScoreBoard update_scores(const std::vector<BuilderState>& builders, const ScoreWeights& w, double floor) {
  ScoreBoard board;
  for (const auto& b : builders) {
    const double f_r = b.reward_window.mean();
    const double f_d = b.inclusion_delay_window.mean();
    const double f_m = b.expiry_window.mean();
    board.f_r.push_back(f_r);
    board.f_d.push_back(f_d);
    board.f_m.push_back(f_m);
    board.score.push_back(std::max(w.w_r * f_r + w.w_d * f_d + w.w_m * f_m, floor));
  }
  return board;
}

RoundTraffic generate_round_transactions(Rng& rng, const SimConfig& config, Round round, const ScoreBoard& scores,
                                         std::uint64_t& next_tx_id) {
  RoundTraffic out;
  const std::vector<double> uniform(config.builder_count(), 1.0);
  const std::span<const double> weights = config.uniform_routing ? std::span<const double>(uniform)
                                                                 : std::span<const double>(scores.score);
  for (std::int64_t u = 0; u < config.n_users; ++u) {
    if (!rng.bernoulli(config.q)) continue;
    Transaction tx;
    tx.id = TxId{next_tx_id++};
    tx.kind = TxKind::private_tx;
    tx.value = rng.exponential(config.mean_private_fee);
    tx.created_round = round;
    tx.ttl = config.ttl;
    tx.origin_user = UserId{static_cast<std::uint32_t>(u)};
    tx.assigned_builder = BuilderId{static_cast<std::uint32_t>(rng.weighted_index(weights))};
    out.private_txs.push_back(tx);
  }
  out.public_txs.reserve(static_cast<std::size_t>(config.k_public));
  for (std::int64_t i = 0; i < config.k_public; ++i) {
    Transaction tx;
    tx.id = TxId{next_tx_id++};
    tx.kind = TxKind::public_tx;
    tx.value = rng.exponential(config.mean_public_fee);
    tx.created_round = round;
    tx.ttl = 1;
    out.public_txs.push_back(tx);
  }
  return out;
}

WorldState WorldState::initial(const ValidatedConfig& validated) {
  const SimConfig& c = validated.get();
  WorldState s;
  s.config = c;
  s.user_refunds.assign(static_cast<std::size_t>(c.n_users), 0.0);
  const auto window = static_cast<std::size_t>(c.window);
  const double reward_unit = nominal_builder_reward(c);
  for (std::size_t i = 0; i < c.builder_count(); ++i) {
    BuilderState b;
    b.id = BuilderId{static_cast<std::uint32_t>(i)};
    b.kind = i == 0 ? BuilderKind::flashback : BuilderKind::standard;
    b.reward_window = MovingWindow(window);
    b.inclusion_delay_window = MovingWindow(window);
    b.expiry_window = MovingWindow(window);
    // Synthetic history proportional to the initial score; it leaves the
    // windows as real observations arrive.
    for (std::int64_t k = 0; k < c.initial_knowledge_length; ++k) {
      b.reward_window.push(c.initial_scores[i] * reward_unit);
      b.inclusion_delay_window.push(c.initial_scores[i] * static_cast<double>(c.ttl));
      b.expiry_window.push(0.0);
    }
    s.builders.push_back(std::move(b));
  }
  s.scores = update_scores(s.builders, c.score_weights, c.score_floor);
  return s;
}

RoundLog step(WorldState& s, Rng& rng) {
  const SimConfig& c = s.config;
  const Round t = s.round;
  const std::size_t nb = s.builders.size();

  RoundLog log;
  log.round = t;
  log.expired_count.assign(nb, 0);

  // (1) expiry, with feedback thinning of the expired counts
  for (std::size_t b = 0; b < nb; ++b) {
    auto& pool = s.builders[b].private_mempool;
    const auto keep_end =
        std::stable_partition(pool.begin(), pool.end(), [t](const Transaction& tx) { return tx.expiry_round() > t; });
    log.expired_count[b] = static_cast<std::int64_t>(pool.end() - keep_end);
    pool.erase(keep_end, pool.end());
    std::int64_t reported = 0;
    for (std::int64_t k = 0; k < log.expired_count[b]; ++k)
      if (rng.bernoulli(c.feedback_fraction)) ++reported;
    s.builders[b].expiry_window.push(static_cast<double>(reported));
  }

  // (2) traffic
  RoundTraffic traffic = generate_round_transactions(rng, c, t, s.scores, s.next_tx_id);
  for (auto& tx : traffic.private_txs) s.builders[tx.assigned_builder->value].private_mempool.push_back(tx);

  // (3) candidate blocks
  std::vector<CandidateBlock> candidates;
  candidates.reserve(nb);
  BuilderState& primary = s.builders[kPrimary.value];
  const bool reserved_round = primary.reservation && primary.reservation->round == t;
  for (auto& b : s.builders) {
    if (b.id == kPrimary && reserved_round) {
      std::vector<Transaction> reserved;
      for (const auto& id : b.reservation->tx_ids) {
        const auto it = std::find_if(b.private_mempool.begin(), b.private_mempool.end(),
                                     [&](const Transaction& tx) { return tx.id == id; });
        check(it != b.private_mempool.end(), "reserved transaction missing from mempool", t);
        reserved.push_back(*it);
      }
      candidates.push_back(build_block_with_reservation(b.id, reserved, b.private_mempool, traffic.public_txs,
                                                        c.block_size, b.reservation->r1, c.r2, t));
    } else {
      candidates.push_back(build_block_default(b.id, b.private_mempool, traffic.public_txs, c.block_size, c.r2));
    }
  }

  // (4) selection
  std::size_t winner = kPrimary.value;
  if (!reserved_round) {
    double best = candidates[0].proposer_value;
    for (const auto& cb : candidates) best = std::max(best, cb.proposer_value);
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < nb; ++i)
      if (candidates[i].proposer_value == best) tied.push_back(i);
    winner = tied.size() == 1 ? tied[0] : tied[rng.below(tied.size())];
  }
  const CandidateBlock& block = candidates[winner];

  // (5) settlement
  log.winning_builder = block.builder;
  log.reservation_flag = reserved_round;
  log.block_value = block.total_value;
  log.builder_take = block.builder_value;
  log.proposer_take = block.proposer_value;
  log.proposer_private_take = block.proposer_private_value;

  double fees = 0.0;
  for (const auto& tx : block.txs) {
    fees += tx.value;
    check(tx.valid_at(t), "confirmed transaction " + std::to_string(tx.id.value) + " outside its validity", t);
    check(s.confirmed.insert(tx.id.value).second, "transaction " + std::to_string(tx.id.value) + " confirmed twice",
          t);
  }
  check(static_cast<std::int64_t>(block.txs.size()) <= c.block_size, "block over capacity", t);
  check(std::abs(log.builder_take + log.proposer_take - log.block_value) <= kConservationTol, "split mismatch", t);
  check(std::abs(fees - log.block_value) <= kConservationTol, "fees not conserved", t);
  check(!log.reservation_flag || log.winning_builder == kPrimary, "reservation not honored", t);

  if (reserved_round) {
    const double r1 = primary.reservation->r1;
    if (r1 < c.r2) {
      for (const auto& tx : block.txs) {
        const bool is_reserved = std::find(block.reserved_ids.begin(), block.reserved_ids.end(), tx.id) !=
                                 block.reserved_ids.end();
        if (is_reserved && tx.origin_user) s.user_refunds[tx.origin_user->value] += (c.r2 - r1) * tx.value;
      }
    }
    primary.reservation.reset();
  }

  BuilderState& won = s.builders[winner];
  std::unordered_set<std::uint64_t> included;
  for (const auto& tx : block.txs)
    if (tx.kind == TxKind::private_tx) included.insert(tx.id.value);
  std::erase_if(won.private_mempool, [&](const Transaction& tx) { return included.contains(tx.id.value); });

  // (6) bid for the next round
  if (primary.kind == BuilderKind::flashback && !primary.reservation) {
    const auto history = std::span<const RoundLog>(s.logs).last(
        std::min<std::size_t>(s.logs.size(), static_cast<std::size_t>(c.window) + 1));
    const double e_hat = estimate_expected_proposer_reward(history, c.window, t, c.estimate_basis);
    if (auto bid = flashback_bid(kPrimary, primary.private_mempool, primary.auctioned, e_hat, c, t)) {
      log.bid_issued = true;
      log.bid_value = bid->total_value;
      log.bid_rate = bid->r1;
      if (e_hat > 0.0) check(bid->r1 >= 0.0 && bid->r1 < 1.0, "bid rate out of range", t);
      log.bid_accepted = proposer_decide_bid(c.proposer_bid_policy, *bid, e_hat, rng);
      if (log.bid_accepted) {
        for (const auto& id : bid->tx_ids) primary.auctioned.insert(id.value);
        primary.reservation = Reservation{t + 1, bid->tx_ids, bid->r1};
      }
    }
  }

  // (7) score windows
  for (std::size_t b = 0; b < nb; ++b) s.builders[b].reward_window.push(b == winner ? log.builder_take : 0.0);
  for (const auto& tx : block.txs) {
    if (tx.kind != TxKind::private_tx) continue;
    if (rng.bernoulli(c.feedback_fraction))
      won.inclusion_delay_window.push(static_cast<double>(tx.expiry_round() - t));
  }
  s.scores = update_scores(s.builders, c.score_weights, c.score_floor);
  log.scores_after = s.scores.score;

  s.logs.push_back(log);
  ++s.round;
  return log;
}

double SimResult::share_from(Round from_round, BuilderId builder) const {
  std::int64_t n = 0, won = 0;
  for (const auto& log : logs) {
    if (log.round < from_round) continue;
    ++n;
    if (log.winning_builder == builder) ++won;
  }
  return n == 0 ? 0.0 : static_cast<double>(won) / static_cast<double>(n);
}

double SimResult::mean_take_per_block(BuilderId builder) const {
  const auto i = builder.value;
  return blocks_won[i] == 0 ? 0.0 : cumulative_builder_reward[i] / static_cast<double>(blocks_won[i]);
}

std::optional<Round> convergence_round(const std::vector<double>& rolling, double band) {
  if (rolling.empty()) return std::nullopt;
  const double final_value = rolling.back();
  std::size_t first_ok = 0;
  for (std::size_t i = rolling.size(); i-- > 0;) {
    if (std::abs(rolling[i] - final_value) > band) {
      first_ok = i + 1;
      break;
    }
  }
  // rolling[i] covers rounds up to i + window - 1
  return static_cast<Round>(first_ok) + kRollingWindow - 1;
}

SimResult run(const ValidatedConfig& config) {
  const SimConfig& c = config.get();
  SimResult r;
  r.config = c;
  r.blocks_won.assign(c.builder_count(), 0);
  r.cumulative_builder_reward.assign(c.builder_count(), 0.0);
  if (c.rounds == 0) {
    r.block_share.assign(c.builder_count(), 0.0);
    r.user_refunds.assign(static_cast<std::size_t>(c.n_users), 0.0);
    return r;
  }

  WorldState state = WorldState::initial(config);
  state.logs.reserve(static_cast<std::size_t>(c.rounds));
  Rng rng(c.seed);
  for (std::int64_t i = 0; i < c.rounds; ++i) step(state, rng);

  r.logs = std::move(state.logs);
  r.user_refunds = std::move(state.user_refunds);
  std::int64_t rolling_won = 0;
  for (std::size_t i = 0; i < r.logs.size(); ++i) {
    const auto& log = r.logs[i];
    const auto w = log.winning_builder.value;
    ++r.blocks_won[w];
    r.cumulative_builder_reward[w] += log.builder_take;
    r.proposer_rewards.push_back(log.proposer_take);
    if (log.bid_issued) ++r.bids_issued;
    if (log.bid_accepted) ++r.bids_accepted;
    if (log.winning_builder == kPrimary) ++rolling_won;
    if (i >= static_cast<std::size_t>(kRollingWindow) &&
        r.logs[i - static_cast<std::size_t>(kRollingWindow)].winning_builder == kPrimary)
      --rolling_won;
    if (i + 1 >= static_cast<std::size_t>(kRollingWindow))
      r.rolling_primary_share.push_back(static_cast<double>(rolling_won) / static_cast<double>(kRollingWindow));
  }
  for (auto won : r.blocks_won)
    r.block_share.push_back(static_cast<double>(won) / static_cast<double>(r.logs.size()));
  r.convergence_round = convergence_round(r.rolling_primary_share);
  return r;
}

std::string round_csv_header(std::size_t builder_count) {
  std::string h = "round,winning_builder,reservation_flag,block_value,builder_take,proposer_take,bid_issued,bid_value,bid_rate";
  for (std::size_t b = 0; b < builder_count; ++b)
    h += ",score_" + builder_name(BuilderId{static_cast<std::uint32_t>(b)});
  for (std::size_t b = 0; b < builder_count; ++b)
    h += ",expired_" + builder_name(BuilderId{static_cast<std::uint32_t>(b)});
  return h;
}

void write_round_csv(std::ostream& out, const SimResult& result) {
  out << round_csv_header(result.config.builder_count()) << '\n';
  for (const auto& log : result.logs) {
    out << log.round << ',' << builder_name(log.winning_builder) << ',' << (log.reservation_flag ? 1 : 0) << ','
        << format_double(log.block_value) << ',' << format_double(log.builder_take) << ','
        << format_double(log.proposer_take) << ',' << (log.bid_issued ? 1 : 0) << ','
        << (log.bid_value ? format_double(*log.bid_value) : "") << ','
        << (log.bid_rate ? format_double(*log.bid_rate) : "");
    for (double s : log.scores_after) out << ',' << format_double(s);
    for (auto e : log.expired_count) out << ',' << e;
    out << '\n';
  }
}

}  // namespace flashback
