#pragma once

#include <string>

#include <json.hpp>

#include "flashback/analytics.hpp"
#include "flashback/domain.hpp"
#include "flashback/engine.hpp"

namespace flashback::reports {

using json = nlohmann::ordered_json;

json to_json(const AnalyticParams& p);
json to_json(const analytics::CheckRecord& r);
// Failing records are listed in full; passing ones only counted unless
// `all_records` is set.
json to_json(const analytics::CheckReport& r, bool all_records = true);
json to_json(const analytics::FixedPointResult& r);
json to_json(const SimConfig& c);

// Aggregates of one run: shares, rewards, bids, convergence and the
// proposer/user distributions as quantiles.
json run_summary(const SimResult& r, Round share_from = 1000);

// Deterministic text form used for every JSON file.
std::string dump(const json& j);

}  // namespace flashback::reports
