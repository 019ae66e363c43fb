#include "flashback/config_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace flashback {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError(std::string(key), "cannot parse '" + std::string(value) + "' as " + expected);
}

std::int64_t parse_int(std::string_view key, std::string_view text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, text, "integer");
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, text, "unsigned integer");
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  try {
    return parse_double(text);
  } catch (const std::invalid_argument&) {
    bad_value(key, text, "real");
  }
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  bad_value(key, text, "bool");
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_real(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

struct Field {
  std::string name;
  std::function<std::string(const SimConfig&)> get;
  std::function<void(SimConfig&, std::string_view)> set;
};

template <class T>
Field int_field(std::string name, T SimConfig::*member) {
  return {name, [member](const SimConfig& c) { return std::to_string(c.*member); },
          [member, name](SimConfig& c, std::string_view v) {
            if constexpr (std::is_unsigned_v<T>)
              c.*member = parse_uint(name, v);
            else
              c.*member = parse_int(name, v);
          }};
}

Field real_field(std::string name, double SimConfig::*member) {
  return {name, [member](const SimConfig& c) { return format_double(c.*member); },
          [member, name](SimConfig& c, std::string_view v) { c.*member = parse_real(name, v); }};
}

Field bool_field(std::string name, bool SimConfig::*member) {
  return {name, [member](const SimConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, name](SimConfig& c, std::string_view v) { c.*member = parse_bool(name, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("n_users", &SimConfig::n_users));
    f.push_back(real_field("q", &SimConfig::q));
    f.push_back(int_field("k_public", &SimConfig::k_public));
    f.push_back(int_field("ttl", &SimConfig::ttl));
    f.push_back(int_field("block_size", &SimConfig::block_size));
    f.push_back(int_field("bid_count", &SimConfig::bid_count));
    f.push_back(real_field("mean_private_fee", &SimConfig::mean_private_fee));
    f.push_back(real_field("mean_public_fee", &SimConfig::mean_public_fee));
    f.push_back(real_field("r2", &SimConfig::r2));
    f.push_back(real_field("epsilon", &SimConfig::epsilon));
    f.push_back({"score_weights",
                 [](const SimConfig& c) {
                   const auto& w = c.score_weights;
                   return format_list({w.w_r, w.w_d, w.w_m});
                 },
                 [](SimConfig& c, std::string_view v) {
                   const auto w = parse_list("score_weights", v);
                   if (w.size() != 3) bad_value("score_weights", v, "w_r,w_d,w_m");
                   c.score_weights = {w[0], w[1], w[2]};
                 }});
    f.push_back(int_field("window", &SimConfig::window));
    f.push_back(real_field("feedback_fraction", &SimConfig::feedback_fraction));
    f.push_back({"initial_scores", [](const SimConfig& c) { return format_list(c.initial_scores); },
                 [](SimConfig& c, std::string_view v) { c.initial_scores = parse_list("initial_scores", v); }});
    f.push_back(int_field("initial_knowledge_length", &SimConfig::initial_knowledge_length));
    f.push_back(int_field("n_secondary_builders", &SimConfig::n_secondary_builders));
    f.push_back({"proposer_bid_policy", [](const SimConfig& c) { return to_string(c.proposer_bid_policy); },
                 [](SimConfig& c, std::string_view v) {
                   c.proposer_bid_policy = parse_proposer_bid_policy(std::string(v));
                 }});
    f.push_back(int_field("rounds", &SimConfig::rounds));
    f.push_back(int_field("seed", &SimConfig::seed));
    f.push_back(bool_field("bidding", &SimConfig::bidding));
    f.push_back({"fixed_r1",
                 [](const SimConfig& c) { return c.fixed_r1 ? format_double(*c.fixed_r1) : std::string("none"); },
                 [](SimConfig& c, std::string_view v) {
                   if (v == "none")
                     c.fixed_r1.reset();
                   else
                     c.fixed_r1 = parse_real("fixed_r1", v);
                 }});
    f.push_back(bool_field("uniform_routing", &SimConfig::uniform_routing));
    f.push_back({"estimate_basis", [](const SimConfig& c) { return to_string(c.estimate_basis); },
                 [](SimConfig& c, std::string_view v) { c.estimate_basis = parse_estimate_basis(std::string(v)); }});
    f.push_back(real_field("score_floor", &SimConfig::score_floor));
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw ConfigError(std::string(key), "unknown configuration key");
}

}  // namespace

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return v;
}

const std::vector<std::string>& config_field_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& f : fields()) n.push_back(f.name);
    return n;
  }();
  return names;
}

void set_field(SimConfig& config, std::string_view key, std::string_view value) {
  find_field(key).set(config, trim(value));
}

std::string get_field(const SimConfig& config, std::string_view key) { return find_field(key).get(config); }

std::string serialize_config(const SimConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(config) + "\n";
  return out;
}

SimConfig parse_config(std::string_view text, SimConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigParseError(line_no, "expected 'key = value'");
    try {
      set_field(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigParseError(line_no, e.errors().front().field + ": " + e.errors().front().message);
    }
  }
  return base;
}

SimConfig load_config_file(const std::string& path, SimConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace flashback
