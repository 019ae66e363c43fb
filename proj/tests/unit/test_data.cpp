#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flashback/data.hpp"
#include "flashback/engine.hpp"
#include "flashback/rng.hpp"

using namespace flashback;
using namespace flashback::data;

namespace {

Dataset small_dataset() {
  Dataset d;
  d.txs = {{"0xa", "s1", "r1", 0.5, 1.25, 30.0, 21000},
           {"0xb", "s2", "r2", 0.0, 0.75, 28.5, 50000},
           {"0xc", "s3", "r1", 0.0, 2.0, 31.0, 21000}};
  d.blocks = {{100, {"0xa", "0xb"}, 12.5}, {101, {"0xc"}, 13.0}};
  d.private_hashes = {"0xa"};
  return d;
}

std::string tx_text(const std::vector<TxRecord>& txs) {
  std::ostringstream os;
  write_transactions(os, txs);
  return os.str();
}

std::size_t error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_transactions(in);
  } catch (const DataError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("three-file round trip") {
  const Dataset d = small_dataset();
  std::ostringstream t, b, l;
  write_transactions(t, d.txs);
  write_blocks(b, d.blocks);
  write_labels(l, d.private_hashes);
  std::istringstream ti(t.str()), bi(b.str()), li(l.str());
  Dataset back;
  back.txs = parse_transactions(ti);
  back.blocks = parse_blocks(bi);
  back.private_hashes = parse_labels(li);
  CHECK(back == d);

  const auto joined = join(back);
  REQUIRE(joined.records.size() == 3);
  CHECK(joined.unknown_labels.empty());
  CHECK(joined.records[0].tx.hash == "0xa");
  CHECK(joined.records[0].private_flag);
  CHECK(joined.records[0].tx.fee() == 1.75);
  CHECK(joined.records[1].block.number == 100);
  CHECK_FALSE(joined.records[2].private_flag);
  CHECK(joined.records[2].block.number == 101);
}

TEST_CASE("files on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "flashback_test_data";
  std::filesystem::create_directories(dir);
  const auto tx = (dir / "transactions.csv").string(), bl = (dir / "blocks.csv").string(),
             lb = (dir / "private_labels.txt").string();
  write_dataset(small_dataset(), tx, bl, lb);
  CHECK(read_dataset(tx, bl, lb) == small_dataset());
  CHECK(load_dataset(tx, bl, lb).records.size() == 3);
  CHECK_THROWS_AS(read_dataset((dir / "missing.csv").string(), bl, lb), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty label file means no private transactions") {
  Dataset d = small_dataset();
  d.private_hashes.clear();
  std::istringstream empty("");
  CHECK(parse_labels(empty).empty());
  for (const auto& r : join(d).records) CHECK_FALSE(r.private_flag);
  CHECK_THROWS_AS(derive_sim_distributions(join(d).records), std::invalid_argument);
}

TEST_CASE("malformed rows report their line") {
  const std::string good = tx_text(small_dataset().txs);
  CHECK(error_line(good) == 0);
  // header is line 1; break the row on line 3
  std::string bad = good;
  bad.replace(bad.find("0.75"), 4, "abc");
  CHECK(error_line(bad) == 3);
  CHECK(error_line(std::string(kTxHeader) + "\n0xa,s,r,1,1,1\n") == 2);
  CHECK(error_line(std::string(kTxHeader) + "\n0xa,s,r,-1,1,1,1\n") == 2);
  CHECK(error_line(std::string(kTxHeader) + "\n0xa,s,r,1,1,1,1.5\n") == 2);
  CHECK(error_line("hash,sender\n") == 1);
  // blank lines and CRLF endings are tolerated
  CHECK(error_line(std::string(kTxHeader) + "\r\n\r\n0xa,s,r,1,1,1,1\r\n") == 0);
}

TEST_CASE("duplicates and dangling references are rejected") {
  SUBCASE("duplicate transaction hash") {
    CHECK(error_line(std::string(kTxHeader) + "\n0xa,s,r,1,1,1,1\n0xa,s,r,2,2,2,2\n") == 3);
  }
  SUBCASE("duplicate block number") {
    std::istringstream in(std::string(kBlockHeader) + "\n1,0xa,1\n1,0xb,1\n");
    CHECK_THROWS_AS(parse_blocks(in), DataError);
  }
  SUBCASE("block lists an unknown hash") {
    Dataset d = small_dataset();
    d.blocks[1].tx_hashes.push_back("0xzz");
    CHECK_THROWS_AS(join(d), DataError);
  }
  SUBCASE("transaction in two blocks") {
    Dataset d = small_dataset();
    d.blocks[1].tx_hashes.push_back("0xa");
    CHECK_THROWS_AS(join(d), DataError);
  }
  SUBCASE("transaction in no block") {
    Dataset d = small_dataset();
    d.blocks[1].tx_hashes.clear();
    CHECK_THROWS_AS(join(d), DataError);
  }
  SUBCASE("unknown labels are reported, not fatal") {
    Dataset d = small_dataset();
    d.private_hashes.push_back("0xnope");
    const auto r = join(d);
    REQUIRE(r.unknown_labels.size() == 1);
    CHECK(r.unknown_labels[0] == "0xnope");
  }
}

TEST_CASE("exponential fit") {
  const std::vector<double> two{2.0, 4.0};
  CHECK(fit_exponential(two) == 3.0);
  const std::vector<double> flat(50, 1.7);
  CHECK(fit_exponential(flat) == doctest::Approx(1.7));
  CHECK_THROWS_AS(fit_exponential(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(fit_exponential(std::vector<double>{1.0, -1.0}), std::invalid_argument);

  Rng rng(3);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = rng.exponential(1.7);
  CHECK(std::abs(fit_exponential(xs) - 1.7) < 4 * 1.7 / std::sqrt(1e5));
}

TEST_CASE("derived distributions") {
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 100; ++i) {
    DatasetRecord r;
    r.tx.hash = "h" + std::to_string(i);
    r.private_flag = i < 3;
    r.tx.transaction_fee = r.private_flag ? 2.0 : 1.0;
    r.tx.direct_payment_fee = r.private_flag ? 1.59 : 0.0;
    recs.push_back(r);
  }
  const auto fit = derive_sim_distributions(recs);
  CHECK(fit.private_count == 3);
  CHECK(fit.public_count == 97);
  CHECK(fit.mean_private_fee == doctest::Approx(3.59));
  CHECK(fit.mean_public_fee == doctest::Approx(1.0));
  CHECK(fit.private_count_fraction == doctest::Approx(0.03));
  CHECK(fit.private_fee_share == doctest::Approx(10.77 / 107.77));

  const SimConfig c = apply_fit(fit, SimConfig{});
  CHECK(c.mean_public_fee == 1.0);
  CHECK(c.mean_private_fee == doctest::Approx(3.59));
  CHECK(static_cast<double>(c.n_users) * c.q / (static_cast<double>(c.n_users) * c.q + static_cast<double>(c.k_public)) ==
        doctest::Approx(0.03));
  CHECK_NOTHROW(validate_config(c));

  recs.resize(3);
  CHECK_THROWS_AS(derive_sim_distributions(recs), std::invalid_argument);
}

TEST_CASE("fixture is schema-identical and hits its targets") {
  FixtureSpec spec;
  const Dataset ds = generate_fixture(spec);
  CHECK(ds.txs.size() == static_cast<std::size_t>(spec.blocks * spec.txs_per_block));
  CHECK(generate_fixture(spec) == ds);

  std::ostringstream t;
  write_transactions(t, ds.txs);
  CHECK(t.str().rfind(std::string(kTxHeader) + "\n", 0) == 0);
  std::istringstream ti(t.str());
  CHECK(parse_transactions(ti) == ds.txs);

  const auto fit = derive_sim_distributions(join(ds).records);
  const double n = static_cast<double>(ds.txs.size());
  const double f = spec.private_fraction;
  CHECK(std::abs(fit.private_count_fraction - f) < 4 * std::sqrt(f * (1 - f) / n));
  CHECK(fit.private_fee_share == doctest::Approx(spec.private_fee_share).epsilon(0.15));
}

TEST_CASE("fitted config reproduces the data's mix in generated traffic") {
  const auto fit = derive_sim_distributions(join(generate_fixture({})).records);
  const SimConfig c = apply_fit(fit, SimConfig{});
  Rng rng(11);
  std::uint64_t next = 0;
  double priv_n = 0, pub_n = 0, priv_fee = 0, pub_fee = 0;
  const ScoreBoard even{{1, 1}, {}, {}, {}};
  for (Round r = 0; priv_n + pub_n < 2e5; ++r) {
    const auto traffic = generate_round_transactions(rng, c, r, even, next);
    for (const auto& tx : traffic.private_txs) priv_fee += tx.value;
    for (const auto& tx : traffic.public_txs) pub_fee += tx.value;
    priv_n += static_cast<double>(traffic.private_txs.size());
    pub_n += static_cast<double>(traffic.public_txs.size());
  }
  const double frac = priv_n / (priv_n + pub_n);
  const double se = std::sqrt(fit.private_count_fraction * (1 - fit.private_count_fraction) / (priv_n + pub_n));
  CHECK(std::abs(frac - fit.private_count_fraction) < 5 * se);
  CHECK(priv_fee / (priv_fee + pub_fee) == doctest::Approx(fit.private_fee_share).epsilon(0.1));
}
