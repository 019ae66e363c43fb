#include "flashback/domain.hpp"

#include <cmath>
#include <sstream>

namespace flashback {

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
  std::ostringstream os;
  os << "invalid configuration:";
  for (const auto& e : errors) os << "\n  " << e.field << ": " << e.message;
  return os.str();
}

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

bool satisfies_invariants(const Transaction& tx) noexcept {
  if (!(tx.value >= 0.0) || tx.ttl <= 0 || tx.created_round < 0) return false;
  if (tx.kind == TxKind::public_tx) return tx.ttl == 1 && !tx.assigned_builder.has_value();
  return tx.assigned_builder.has_value();
}

ConfigError::ConfigError(std::vector<FieldError> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

ConfigError::ConfigError(std::string field, std::string message)
    : ConfigError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}

std::vector<FieldError> config_errors(const SimConfig& c) {
  std::vector<FieldError> out;
  auto fail = [&out](const char* field, std::string msg) { out.push_back({field, std::move(msg)}); };

  if (c.n_users <= 0) fail("n_users", "must be positive");
  if (!in_open_unit(c.q)) fail("q", "must lie in (0,1)");
  if (c.k_public < 0) fail("k_public", "must be non-negative");
  if (c.ttl <= 0) fail("ttl", "must be positive");
  if (c.block_size <= 0) fail("block_size", "must be positive");
  if (c.bid_count <= 0) fail("bid_count", "must be positive");
  if (c.bid_count >= c.block_size) fail("bid_count", "bid_count must be < block_size");
  if (!(c.mean_private_fee > 0.0) || !std::isfinite(c.mean_private_fee))
    fail("mean_private_fee", "must be positive");
  if (!(c.mean_public_fee > 0.0) || !std::isfinite(c.mean_public_fee))
    fail("mean_public_fee", "must be positive");
  if (!in_open_unit(c.r2)) {
    fail("r2", "must lie in (0,1)");
  } else {
    const double bound = 1.0 / (1.0 - c.r2) - 1.0;
    if (!(c.epsilon > bound)) {
      std::ostringstream os;
      os.precision(17);
      os << "epsilon below 1/(1-r2)-1 = " << bound;
      fail("epsilon", os.str());
    }
  }
  if (!(c.score_weights.w_r > 0.0)) fail("score_weights", "w_r must be > 0");
  if (!(c.score_weights.w_d > 0.0)) fail("score_weights", "w_d must be > 0");
  if (!(c.score_weights.w_m < 0.0)) fail("score_weights", "w_m must be < 0");
  if (c.window <= 0) fail("window", "must be positive");
  if (!(c.feedback_fraction > 0.0 && c.feedback_fraction <= 1.0))
    fail("feedback_fraction", "must lie in (0,1]");
  if (c.n_secondary_builders <= 0) fail("n_secondary_builders", "must be positive");
  if (c.n_secondary_builders > 0 &&
      c.initial_scores.size() != static_cast<std::size_t>(c.n_secondary_builders) + 1)
    fail("initial_scores", "needs one entry per builder (n_secondary_builders + 1)");
  for (double s : c.initial_scores) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      fail("initial_scores", "entries must be positive");
      break;
    }
  }
  if (c.initial_knowledge_length <= 0) fail("initial_knowledge_length", "must be positive");
  if (c.rounds < 0) fail("rounds", "must be non-negative");
  if (c.fixed_r1 && !(*c.fixed_r1 >= 0.0 && *c.fixed_r1 < 1.0)) fail("fixed_r1", "must lie in [0,1)");
  if (!(c.score_floor > 0.0)) fail("score_floor", "must be positive");
  return out;
}

ValidatedConfig validate_config(SimConfig config) {
  auto errors = config_errors(config);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return ValidatedConfig(std::move(config));
}

std::vector<FieldError> analytic_param_errors(const AnalyticParams& p) {
  std::vector<FieldError> out;
  if (!in_open_unit(p.mu1)) out.push_back({"mu1", "must lie in (0,1)"});
  if (!in_open_unit(p.mu2)) out.push_back({"mu2", "must lie in (0,1)"});
  if (std::abs(p.mu1 + p.mu2 - 1.0) > 1e-12) out.push_back({"mu1", "mu1 + mu2 must equal 1"});
  if (!(p.mu3 > 0.0) || !std::isfinite(p.mu3)) out.push_back({"mu3", "must be positive"});
  if (!(p.rho > 0.0)) out.push_back({"rho", "must be positive"});
  if (!(p.r1 >= 0.0 && p.r1 < 1.0)) out.push_back({"r1", "must lie in [0,1)"});
  if (!in_open_unit(p.r2)) out.push_back({"r2", "must lie in (0,1)"});
  return out;
}

void validate(const AnalyticParams& p) {
  auto errors = analytic_param_errors(p);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

std::string builder_name(BuilderId id) {
  if (id == kPrimary) return "primary";
  return "secondary_" + std::to_string(id.value);
}

std::string to_string(ProposerBidPolicy policy) {
  switch (policy) {
    case ProposerBidPolicy::greedy: return "greedy";
    case ProposerBidPolicy::random_half: return "random_half";
    case ProposerBidPolicy::proportional: return "proportional";
  }
  return "greedy";
}

std::string to_string(EstimateBasis basis) {
  return basis == EstimateBasis::private_value ? "private_value" : "block_value";
}

ProposerBidPolicy parse_proposer_bid_policy(const std::string& name) {
  if (name == "greedy") return ProposerBidPolicy::greedy;
  if (name == "random_half") return ProposerBidPolicy::random_half;
  if (name == "proportional") return ProposerBidPolicy::proportional;
  throw ConfigError("proposer_bid_policy", "unknown policy '" + name + "'");
}

EstimateBasis parse_estimate_basis(const std::string& name) {
  if (name == "private_value") return EstimateBasis::private_value;
  if (name == "block_value") return EstimateBasis::block_value;
  throw ConfigError("estimate_basis", "unknown basis '" + name + "'");
}

}  // namespace flashback
