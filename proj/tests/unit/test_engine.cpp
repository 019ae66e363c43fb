#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "flashback/engine.hpp"

using namespace flashback;

namespace {

SimConfig small_config(std::int64_t rounds = 600, std::uint64_t seed = 1) {
  SimConfig c;
  c.rounds = rounds;
  c.seed = seed;
  c.window = 200;
  return c;
}

std::string csv(const SimResult& r) {
  std::ostringstream out;
  write_round_csv(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("moving window") {
  MovingWindow w(3);
  CHECK(w.mean() == 0.0);
  w.push(1);
  w.push(2);
  CHECK(w.mean() == 1.5);
  w.push(3);
  w.push(10);
  CHECK(w.size() == 3);
  CHECK(w.mean() == doctest::Approx(5.0));
  for (int i = 0; i < 1000; ++i) w.push(0.1 * i);
  CHECK(w.mean() == doctest::Approx((99.7 + 99.8 + 99.9) / 3).epsilon(1e-12));
}

TEST_CASE("update_scores") {
  SimConfig c;
  BuilderState a, b;
  a.reward_window = b.reward_window = MovingWindow(10);
  a.inclusion_delay_window = b.inclusion_delay_window = MovingWindow(10);
  a.expiry_window = b.expiry_window = MovingWindow(10);

  SUBCASE("empty history hits the floor") {
    const auto s = update_scores({a, b}, {1, 1, -1}, 1e-6);
    CHECK(s.score == std::vector<double>{1e-6, 1e-6});
  }
  SUBCASE("weighted sum") {
    a.reward_window.push(2);
    a.inclusion_delay_window.push(1);
    a.expiry_window.push(0);
    b = a;
    const auto s = update_scores({a, b}, {1, 1, -1}, 1e-6);
    CHECK(s.score[0] == 3.0);
    CHECK(s.f_r[0] == 2.0);
    CHECK(s.f_d[0] == 1.0);
    CHECK(s.f_m[0] == 0.0);
    CHECK(s.score[0] == s.score[1]);
  }
  SUBCASE("negative totals are floored") {
    a.expiry_window.push(50);
    const auto s = update_scores({a}, {1, 1, -1}, 1e-6);
    CHECK(s.score[0] == 1e-6);
  }
}

TEST_CASE("traffic generation") {
  SUBCASE("no private traffic") {
    SimConfig c;
    c.n_users = 10;
    c.q = 1e-300;
    c.k_public = 5;
    Rng rng(1);
    std::uint64_t next = 0;
    const auto t = generate_round_transactions(rng, c, 3, ScoreBoard{{1, 1}, {}, {}, {}}, next);
    CHECK(t.private_txs.empty());
    CHECK(t.public_txs.size() == 5);
    for (const auto& tx : t.public_txs) {
      CHECK(tx.ttl == 1);
      CHECK(tx.created_round == 3);
      CHECK(satisfies_invariants(tx));
    }
    CHECK(next == 5);
  }

  SUBCASE("equal scores split evenly") {
    SimConfig c;
    c.n_users = 100000;
    c.q = 0.5;
    c.k_public = 0;
    Rng rng(2);
    std::uint64_t next = 0;
    const auto t = generate_round_transactions(rng, c, 0, ScoreBoard{{1, 1}, {}, {}, {}}, next);
    std::int64_t to_primary = 0;
    for (const auto& tx : t.private_txs) {
      CHECK(satisfies_invariants(tx));
      to_primary += tx.assigned_builder == kPrimary;
    }
    const double sigma = std::sqrt(100000 * 0.25 * 0.75);
    CHECK(std::abs(to_primary - 25000.0) < 4 * sigma);
    CHECK(std::abs(static_cast<double>(t.private_txs.size()) - to_primary - 25000.0) < 4 * sigma);
  }

  SUBCASE("routing follows score ratio") {
    SimConfig c;
    c.n_users = 100000;
    c.q = 0.999999;
    c.k_public = 0;
    Rng rng(3);
    std::uint64_t next = 0;
    const auto t = generate_round_transactions(rng, c, 0, ScoreBoard{{3, 1}, {}, {}, {}}, next);
    double to_primary = 0;
    for (const auto& tx : t.private_txs) to_primary += tx.assigned_builder == kPrimary;
    const double n = static_cast<double>(t.private_txs.size());
    CHECK(std::abs(to_primary / n - 0.75) < 4 * std::sqrt(0.75 * 0.25 / n));

    c.uniform_routing = true;
    const auto u = generate_round_transactions(rng, c, 0, ScoreBoard{{3, 1}, {}, {}, {}}, next);
    double uprim = 0;
    for (const auto& tx : u.private_txs) uprim += tx.assigned_builder == kPrimary;
    CHECK(std::abs(uprim / static_cast<double>(u.private_txs.size()) - 0.5) < 4 * std::sqrt(0.25 / n));
  }

  SUBCASE("fee means") {
    SimConfig c;
    c.n_users = 200000;
    c.q = 0.5;
    c.k_public = 200000;
    Rng rng(4);
    std::uint64_t next = 0;
    const auto t = generate_round_transactions(rng, c, 0, ScoreBoard{{1, 1}, {}, {}, {}}, next);
    double sp = 0, su = 0;
    for (const auto& tx : t.private_txs) sp += tx.value;
    for (const auto& tx : t.public_txs) su += tx.value;
    const double np = static_cast<double>(t.private_txs.size()), nu = 200000.0;
    CHECK(std::abs(sp / np - c.mean_private_fee) < 4 * c.mean_private_fee / std::sqrt(np));
    CHECK(std::abs(su / nu - c.mean_public_fee) < 4 * c.mean_public_fee / std::sqrt(nu));
  }
}

TEST_CASE("initial scores enter as history") {
  SimConfig c = small_config();
  c.initial_scores = {4.0, 1.0};
  c.initial_knowledge_length = 200;
  const WorldState s = WorldState::initial(validate_config(c));
  CHECK(s.scores.score[0] / s.scores.score[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(s.builders[0].reward_window.size() == 200);
  CHECK(s.builders[0].kind == BuilderKind::flashback);
  CHECK(s.builders[1].kind == BuilderKind::standard);
}

TEST_CASE("empty round") {
  SimConfig c = small_config();
  c.n_users = 1;
  c.q = 1e-300;
  c.k_public = 0;
  WorldState s = WorldState::initial(validate_config(c));
  Rng rng(1);
  const RoundLog log = step(s, rng);
  CHECK(log.block_value == 0.0);
  CHECK_FALSE(log.bid_issued);
  CHECK(log.round == 0);
  CHECK(s.round == 1);
}

TEST_CASE("reserved round goes to the primary even against a richer block") {
  SimConfig c = small_config();
  c.n_users = 1;
  c.q = 1e-300;
  c.k_public = 0;
  WorldState s = WorldState::initial(validate_config(c));

  Transaction small;
  small.id = TxId{1000};
  small.kind = TxKind::private_tx;
  small.value = 1.0;
  small.ttl = 10;
  small.assigned_builder = kPrimary;
  s.builders[0].private_mempool.push_back(small);
  s.builders[0].reservation = Reservation{0, {TxId{1000}}, 0.5};
  s.builders[0].auctioned.insert(1000);

  Transaction big = small;
  big.id = TxId{1001};
  big.value = 100.0;
  big.assigned_builder = BuilderId{1};
  s.builders[1].private_mempool.push_back(big);

  Rng rng(1);
  const RoundLog log = step(s, rng);
  CHECK(log.reservation_flag);
  CHECK(log.winning_builder == kPrimary);
  CHECK(log.block_value == 1.0);
  CHECK(log.builder_take == 0.5);
  CHECK(log.proposer_take == 0.5);
  CHECK_FALSE(s.builders[0].reservation.has_value());
  CHECK(s.builders[1].private_mempool.size() == 1);  // still pending with the loser
}

TEST_CASE("tie between equal blocks is a coin flip") {
  SimConfig c = small_config();
  c.n_users = 1;
  c.q = 1e-300;
  c.k_public = 3;
  c.bidding = false;
  int primary = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    WorldState s = WorldState::initial(validate_config(c));
    Rng rng(static_cast<std::uint64_t>(i));
    primary += step(s, rng).winning_builder == kPrimary;
  }
  CHECK(std::abs(primary / double(n) - 0.5) < 4 * std::sqrt(0.25 / n));
}

TEST_CASE("run invariants over varied configs") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SimConfig c = small_config(800, seed);
    c.ttl = 1 + static_cast<std::int64_t>(seed * 3 % 12);
    c.bid_count = 1 + static_cast<std::int64_t>(seed % 5);
    c.proposer_bid_policy = static_cast<ProposerBidPolicy>(seed % 3);
    c.n_secondary_builders = 1 + static_cast<std::int64_t>(seed % 2);
    c.initial_scores.assign(c.builder_count(), 1.0);
    c.q = 0.05;
    SimResult r;
    REQUIRE_NOTHROW(r = run(validate_config(c)));
    REQUIRE(r.logs.size() == 800);
    double shares = 0;
    for (double s : r.block_share) shares += s;
    CHECK(shares == doctest::Approx(1.0));
    for (const auto& log : r.logs) {
      CHECK(std::abs(log.builder_take + log.proposer_take - log.block_value) <= 1e-9);
      if (log.reservation_flag) CHECK(log.winning_builder == kPrimary);
      CHECK(log.scores_after.size() == c.builder_count());
      for (double s : log.scores_after) CHECK(s > 0.0);
      if (log.bid_rate) CHECK(*log.bid_rate < 1.0);
    }
  }
}

TEST_CASE("ttl 1 leaves nothing to auction") {
  SimConfig c = small_config(500);
  c.ttl = 1;
  const SimResult r = run(validate_config(c));
  CHECK(r.bids_issued == 0);
}

TEST_CASE("bidding off never reserves") {
  SimConfig c = small_config(1000);
  c.bidding = false;
  const SimResult r = run(validate_config(c));
  CHECK(r.bids_issued == 0);
  for (const auto& log : r.logs) CHECK_FALSE(log.reservation_flag);
  double refunds = 0;
  for (double x : r.user_refunds) refunds += x;
  CHECK(refunds == 0.0);
}

TEST_CASE("refunds appear only when reserved fees are split below r2") {
  SimConfig c = small_config(3000);
  c.fixed_r1 = 0.0;
  const SimResult zero = run(validate_config(c));
  double refunds = 0;
  for (double x : zero.user_refunds) refunds += x;
  REQUIRE(zero.bids_accepted > 0);
  CHECK(refunds > 0.0);

  c.fixed_r1.reset();
  const SimResult normal = run(validate_config(c));
  double none = 0;
  for (double x : normal.user_refunds) none += x;
  CHECK(none == 0.0);
}

TEST_CASE("determinism") {
  const SimConfig c = small_config(700, 42);
  const SimResult a = run(validate_config(c));
  const SimResult b = run(validate_config(c));
  CHECK(csv(a) == csv(b));
  SimConfig d = c;
  d.seed = 43;
  CHECK(csv(run(validate_config(d))) != csv(a));
}

TEST_CASE("zero rounds") {
  const SimResult r = run(validate_config(small_config(0)));
  CHECK(r.logs.empty());
  CHECK(r.blocks_won == std::vector<std::int64_t>{0, 0});
  CHECK_FALSE(r.convergence_round.has_value());
}

TEST_CASE("round csv columns") {
  CHECK(round_csv_header(3) ==
        "round,winning_builder,reservation_flag,block_value,builder_take,proposer_take,bid_issued,bid_value,bid_rate,"
        "score_primary,score_secondary_1,score_secondary_2,expired_primary,expired_secondary_1,expired_secondary_2");
  const SimResult r = run(validate_config(small_config(50)));
  const std::string text = csv(r);
  std::istringstream in(text);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 12);
    ++rows;
  }
  CHECK(rows == 51);
}

TEST_CASE("convergence diagnostic") {
  std::vector<double> flat(100, 0.5);
  CHECK(convergence_round(flat) == kRollingWindow - 1);
  std::vector<double> settle(100, 0.6);
  for (int i = 0; i < 30; ++i) settle[i] = 0.5;
  // index 29 is the last point outside the band
  CHECK(convergence_round(settle) == 30 + kRollingWindow - 1);
  CHECK_FALSE(convergence_round({}).has_value());
}
