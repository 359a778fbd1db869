#pragma once

#include <json.hpp>

#include "mtscale/network.hpp"

namespace mtscale {

nlohmann::json to_json_value(const NetworkConfig& config);
// Unknown keys are rejected; missing keys keep their defaults.
NetworkConfig network_config_from_json(const nlohmann::json& j);

}  // namespace mtscale
