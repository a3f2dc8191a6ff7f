#pragma once

#include "json.hpp"
#include "mdiqds/decoy_estimation.hpp"
#include "mdiqds/security_engine.hpp"

namespace mdiqds {

nlohmann::json to_json(const ErrorBudget& budget);
nlohmann::json to_json(const YieldEstimate& estimate);
nlohmann::json to_json(const SecurityReport& report);

/// Non-finite numbers become strings ("inf", "-inf", "nan") so the output
/// stays valid JSON.
nlohmann::json number(double x);

}  // namespace mdiqds
