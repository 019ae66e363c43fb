#include "flashback/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "flashback/config_io.hpp"
#include "flashback/rng.hpp"

namespace flashback::data {

DataError::DataError(std::string file, std::size_t line, const std::string& what)
    : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
      file_(std::move(file)),
      line_(line) {}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

struct LineReader {
  LineReader(std::istream& in_, std::string name_) : in(in_), name(std::move(name_)) {}

  std::istream& in;
  std::string name;
  std::size_t line_no{0};
  std::string buf;

  bool next(std::string_view& line) {
    if (!std::getline(in, buf)) return false;
    ++line_no;
    line = strip_cr(buf);
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(name, line_no, what); }
};

double nonneg_real(LineReader& r, std::string_view field, std::string_view text) {
  double v = 0.0;
  try {
    v = parse_double(text);
  } catch (const std::exception&) {
    r.fail(std::string(field) + ": not a number '" + std::string(text) + "'");
  }
  if (!std::isfinite(v) || v < 0.0) r.fail(std::string(field) + ": expected a non-negative real");
  return v;
}

template <class Int>
Int integer(LineReader& r, std::string_view field, std::string_view text) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    r.fail(std::string(field) + ": not an integer '" + std::string(text) + "'");
  return v;
}

void expect_header(LineReader& r, std::string_view expected) {
  std::string_view line;
  if (!r.next(line)) r.fail("missing header");
  if (line != expected) r.fail("bad header, expected '" + std::string(expected) + "'");
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path, 0, "cannot open");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot write");
  return out;
}

std::string hex_id(Rng& rng, int digits) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s = "0x";
  for (int i = 0; i < digits; ++i) s += kHex[rng.below(16)];
  return s;
}

}  // namespace

std::vector<TxRecord> parse_transactions(std::istream& in, const std::string& name) {
  LineReader r(in, name);
  expect_header(r, kTxHeader);
  std::vector<TxRecord> txs;
  std::unordered_set<std::string> seen;
  std::string_view line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) r.fail("expected 7 fields, got " + std::to_string(f.size()));
    TxRecord tx;
    tx.hash = f[0];
    if (tx.hash.empty()) r.fail("empty hash");
    tx.sender = f[1];
    tx.receiver = f[2];
    tx.direct_payment_fee = nonneg_real(r, "direct_payment_fee", f[3]);
    tx.transaction_fee = nonneg_real(r, "transaction_fee", f[4]);
    tx.gas_price = nonneg_real(r, "gas_price", f[5]);
    tx.gas_used = integer<std::uint64_t>(r, "gas_used", f[6]);
    if (!seen.insert(tx.hash).second) r.fail("duplicate transaction hash " + tx.hash);
    txs.push_back(std::move(tx));
  }
  return txs;
}

std::vector<BlockRecord> parse_blocks(std::istream& in, const std::string& name) {
  LineReader r(in, name);
  expect_header(r, kBlockHeader);
  std::vector<BlockRecord> blocks;
  std::unordered_set<std::int64_t> numbers;
  std::unordered_set<std::string> listed;
  std::string_view line;
  while (r.next(line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) r.fail("expected 3 fields, got " + std::to_string(f.size()));
    BlockRecord b;
    b.number = integer<std::int64_t>(r, "block_number", f[0]);
    if (!numbers.insert(b.number).second) r.fail("duplicate block number " + std::to_string(b.number));
    if (!f[1].empty()) {
      for (auto h : split(f[1], ';')) {
        if (h.empty()) r.fail("empty hash in tx_hashes");
        if (!listed.insert(std::string(h)).second) r.fail("transaction " + std::string(h) + " listed twice");
        b.tx_hashes.emplace_back(h);
      }
    }
    b.base_fee = nonneg_real(r, "base_fee", f[2]);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::vector<std::string> parse_labels(std::istream& in) {
  LineReader r(in, "labels");
  std::vector<std::string> hashes;
  std::unordered_set<std::string> seen;
  std::string_view line;
  while (r.next(line)) {
    if (line.empty()) continue;
    if (!seen.insert(std::string(line)).second) r.fail("duplicate label " + std::string(line));
    hashes.emplace_back(line);
  }
  return hashes;
}

LoadResult join(const Dataset& ds) {
  std::unordered_map<std::string, std::size_t> by_hash;
  for (std::size_t i = 0; i < ds.txs.size(); ++i)
    if (!by_hash.emplace(ds.txs[i].hash, i).second)
      throw DataError("transactions", 0, "duplicate transaction hash " + ds.txs[i].hash);

  const std::unordered_set<std::string> labels(ds.private_hashes.begin(), ds.private_hashes.end());

  LoadResult out;
  std::vector<bool> placed(ds.txs.size(), false);
  for (const auto& block : ds.blocks) {
    for (const auto& h : block.tx_hashes) {
      const auto it = by_hash.find(h);
      if (it == by_hash.end())
        throw DataError("blocks", 0, "block " + std::to_string(block.number) + " lists unknown transaction " + h);
      if (placed[it->second]) throw DataError("blocks", 0, "transaction " + h + " appears in more than one block");
      placed[it->second] = true;
      out.records.push_back({ds.txs[it->second], block, labels.contains(h)});
    }
  }
  for (std::size_t i = 0; i < placed.size(); ++i)
    if (!placed[i]) throw DataError("transactions", 0, "transaction " + ds.txs[i].hash + " is in no block");
  for (const auto& h : ds.private_hashes)
    if (!by_hash.contains(h)) out.unknown_labels.push_back(h);
  return out;
}

Dataset read_dataset(const std::string& tx_path, const std::string& block_path, const std::string& labels_path) {
  Dataset ds;
  {
    auto in = open_in(tx_path);
    ds.txs = parse_transactions(in, tx_path);
  }
  {
    auto in = open_in(block_path);
    ds.blocks = parse_blocks(in, block_path);
  }
  auto in = open_in(labels_path);
  ds.private_hashes = parse_labels(in);
  return ds;
}

LoadResult load_dataset(const std::string& tx_path, const std::string& block_path, const std::string& labels_path) {
  return join(read_dataset(tx_path, block_path, labels_path));
}

void write_transactions(std::ostream& out, std::span<const TxRecord> txs) {
  out << kTxHeader << '\n';
  for (const auto& tx : txs)
    out << tx.hash << ',' << tx.sender << ',' << tx.receiver << ',' << format_double(tx.direct_payment_fee) << ','
        << format_double(tx.transaction_fee) << ',' << format_double(tx.gas_price) << ',' << tx.gas_used << '\n';
}

void write_blocks(std::ostream& out, std::span<const BlockRecord> blocks) {
  out << kBlockHeader << '\n';
  for (const auto& b : blocks) {
    out << b.number << ',';
    for (std::size_t i = 0; i < b.tx_hashes.size(); ++i) out << (i ? ";" : "") << b.tx_hashes[i];
    out << ',' << format_double(b.base_fee) << '\n';
  }
}

void write_labels(std::ostream& out, std::span<const std::string> hashes) {
  for (const auto& h : hashes) out << h << '\n';
}

void write_dataset(const Dataset& ds, const std::string& tx_path, const std::string& block_path,
                   const std::string& labels_path) {
  {
    auto out = open_out(tx_path);
    write_transactions(out, ds.txs);
  }
  {
    auto out = open_out(block_path);
    write_blocks(out, ds.blocks);
  }
  auto out = open_out(labels_path);
  write_labels(out, ds.private_hashes);
}

Dataset generate_fixture(const FixtureSpec& spec) {
  if (spec.blocks < 0 || spec.txs_per_block < 1) throw std::invalid_argument("fixture: bad sizes");
  if (!(spec.private_fraction > 0.0 && spec.private_fraction < 1.0) ||
      !(spec.private_fee_share > 0.0 && spec.private_fee_share < 1.0))
    throw std::invalid_argument("fixture: fractions must lie in (0,1)");

  const double private_mean =
      spec.mean_public_fee * calibrated_fee_ratio(spec.private_fraction, spec.private_fee_share);
  Rng rng(spec.seed);
  Dataset ds;
  ds.txs.reserve(static_cast<std::size_t>(spec.blocks * spec.txs_per_block));
  for (std::int64_t b = 0; b < spec.blocks; ++b) {
    BlockRecord block;
    block.number = 17'000'000 + b;
    block.base_fee = 10.0 + rng.exponential(20.0);
    for (std::int64_t i = 0; i < spec.txs_per_block; ++i) {
      TxRecord tx;
      tx.hash = hex_id(rng, 64);
      tx.sender = hex_id(rng, 40);
      tx.receiver = hex_id(rng, 40);
      const bool priv = rng.bernoulli(spec.private_fraction);
      const double fee = rng.exponential(priv ? private_mean : spec.mean_public_fee);
      tx.direct_payment_fee = priv ? spec.direct_payment_share * fee : 0.0;
      tx.transaction_fee = fee - tx.direct_payment_fee;
      tx.gas_used = 21'000 + rng.below(279'001);
      tx.gas_price = tx.transaction_fee / static_cast<double>(tx.gas_used);
      block.tx_hashes.push_back(tx.hash);
      if (priv) ds.private_hashes.push_back(tx.hash);
      ds.txs.push_back(std::move(tx));
    }
    ds.blocks.push_back(std::move(block));
  }
  return ds;
}

double fit_exponential(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("fit_exponential: empty sample");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("fit_exponential: values must be finite and >= 0");
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

FittedDistributions derive_sim_distributions(std::span<const DatasetRecord> records) {
  std::vector<double> priv, pub;
  for (const auto& r : records) (r.private_flag ? priv : pub).push_back(r.tx.fee());
  if (priv.empty()) throw std::invalid_argument("derive_sim_distributions: no private transactions");
  if (pub.empty()) throw std::invalid_argument("derive_sim_distributions: no public transactions");

  FittedDistributions fit;
  fit.mean_private_fee = fit_exponential(priv);
  fit.mean_public_fee = fit_exponential(pub);
  fit.private_count = static_cast<std::int64_t>(priv.size());
  fit.public_count = static_cast<std::int64_t>(pub.size());
  fit.private_count_fraction = static_cast<double>(priv.size()) / static_cast<double>(records.size());
  const double priv_total = fit.mean_private_fee * static_cast<double>(priv.size());
  const double pub_total = fit.mean_public_fee * static_cast<double>(pub.size());
  fit.private_fee_share = priv_total / (priv_total + pub_total);
  return fit;
}

SimConfig apply_fit(const FittedDistributions& fit, SimConfig base) {
  if (!(fit.mean_public_fee > 0.0) || !(fit.mean_private_fee > 0.0))
    throw std::invalid_argument("apply_fit: fee means must be positive");
  const double f = fit.private_count_fraction;
  base.mean_public_fee = 1.0;
  base.mean_private_fee = fit.mean_private_fee / fit.mean_public_fee;
  base.q = f * static_cast<double>(base.k_public) / (static_cast<double>(base.n_users) * (1.0 - f));
  return base;
}

}  // namespace flashback::data
