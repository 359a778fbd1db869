#include "mtscale/json_io.hpp"

#include "mtscale/errors.hpp"

namespace mtscale {

nlohmann::json to_json_value(const NetworkConfig& c) {
  return {{"n_io", c.n_io},
          {"n_cf", c.n_cf},
          {"n_cs", c.n_cs},
          {"tau_f", c.tau_f},
          {"tau_s", c.tau_s},
          {"cell", std::string(to_string(c.cell_kind))},
          {"alpha", c.alpha},
          {"seed", c.seed},
          {"alpha_on_prediction", c.alpha_on_prediction},
          {"linear_readout", c.linear_readout}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "network config must be a JSON object");
  NetworkConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_io") c.n_io = value.get<std::size_t>();
      else if (key == "n_cf") c.n_cf = value.get<std::size_t>();
      else if (key == "n_cs") c.n_cs = value.get<std::size_t>();
      else if (key == "tau_f") c.tau_f = value.get<double>();
      else if (key == "tau_s") c.tau_s = value.get<double>();
      else if (key == "cell") c.cell_kind = parse_cell_kind(value.get<std::string>());
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "alpha_on_prediction") c.alpha_on_prediction = value.get<bool>();
      else if (key == "linear_readout") c.linear_readout = value.get<bool>();
      else throw ContractError("unknown network config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ContractError("network config key '" + key + "': " + e.what());
    }
  }
  validate(c);
  return c;
}

}  // namespace mtscale
