#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "flashback/domain.hpp"

namespace flashback::data {

class DataError : public std::runtime_error {
 public:
  DataError(std::string file, std::size_t line, const std::string& what);
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }  // 0 when not tied to a line

 private:
  std::string file_;
  std::size_t line_;
};

struct TxRecord {
  std::string hash;
  std::string sender;
  std::string receiver;
  double direct_payment_fee{0.0};
  double transaction_fee{0.0};
  double gas_price{0.0};
  std::uint64_t gas_used{0};

  double fee() const noexcept { return transaction_fee + direct_payment_fee; }
  friend bool operator==(const TxRecord&, const TxRecord&) = default;
};

struct BlockRecord {
  std::int64_t number{0};
  std::vector<std::string> tx_hashes;
  double base_fee{0.0};
  friend bool operator==(const BlockRecord&, const BlockRecord&) = default;
};

// One transaction joined with its block and label.
struct DatasetRecord {
  TxRecord tx;
  BlockRecord block;
  bool private_flag{false};
};

// The three files in memory.
struct Dataset {
  std::vector<TxRecord> txs;
  std::vector<BlockRecord> blocks;
  std::vector<std::string> private_hashes;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct LoadResult {
  std::vector<DatasetRecord> records;      // block order, then position in block
  std::vector<std::string> unknown_labels;  // label hashes with no transaction
};

inline constexpr const char* kTxHeader = "hash,sender,receiver,direct_payment_fee,transaction_fee,gas_price,gas_used";
inline constexpr const char* kBlockHeader = "block_number,tx_hashes,base_fee";

std::vector<TxRecord> parse_transactions(std::istream& in, const std::string& name = "transactions");
std::vector<BlockRecord> parse_blocks(std::istream& in, const std::string& name = "blocks");
std::vector<std::string> parse_labels(std::istream& in);

// Joins the three tables. Every hash listed by a block must resolve to
// exactly one transaction, and every transaction must sit in exactly one block.
LoadResult join(const Dataset& dataset);
Dataset read_dataset(const std::string& tx_path, const std::string& block_path, const std::string& labels_path);
LoadResult load_dataset(const std::string& tx_path, const std::string& block_path, const std::string& labels_path);

void write_transactions(std::ostream& out, std::span<const TxRecord> txs);
void write_blocks(std::ostream& out, std::span<const BlockRecord> blocks);
void write_labels(std::ostream& out, std::span<const std::string> hashes);
void write_dataset(const Dataset& dataset, const std::string& tx_path, const std::string& block_path,
                   const std::string& labels_path);

struct FixtureSpec {
  std::int64_t blocks{200};
  std::int64_t txs_per_block{150};
  double private_fraction{0.0173};
  double private_fee_share{0.105};
  double mean_public_fee{1.0};
  double direct_payment_share{0.5};  // part of a private fee paid directly to the builder
  std::uint64_t seed{1};
};

// Schema-identical synthetic dump. Private transactions are labelled and get
// a mean fee chosen so that `private_fraction` of transactions carry
// `private_fee_share` of all fees.
Dataset generate_fixture(const FixtureSpec& spec);

// Maximum-likelihood mean of an exponential sample.
double fit_exponential(std::span<const double> values);

struct FittedDistributions {
  double mean_private_fee{0.0};
  double mean_public_fee{0.0};
  double private_count_fraction{0.0};
  double private_fee_share{0.0};
  std::int64_t private_count{0};
  std::int64_t public_count{0};
};

// fee = transaction_fee + direct_payment_fee, fitted per transaction.
FittedDistributions derive_sim_distributions(std::span<const DatasetRecord> records);

// Sets the fee means (public mean normalized to 1) and q so that the expected
// private count fraction n q / (n q + k_public) matches the fit.
SimConfig apply_fit(const FittedDistributions& fit, SimConfig base);

}  // namespace flashback::data
