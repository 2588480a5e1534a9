#include "agesim/engine.hpp"

#include <json.hpp>

namespace agesim {

// RunSpec round-trips through JSON so output artifacts can embed exactly what
// was run; kept here so the header stays free of the JSON dependency.
std::string run_spec_to_json(const RunSpec& spec) {
    nlohmann::json j;
    j["scenario"] = spec.scenario;
    j["seed"] = spec.seed;
    j["duration_ms"] = spec.duration_ms;
    j["config"] = spec.config_json.empty() ? nlohmann::json::object()
                                           : nlohmann::json::parse(spec.config_json);
    return j.dump(2);
}

RunSpec run_spec_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RunSpec spec;
    spec.scenario = j.value("scenario", std::string{});
    spec.seed = j.value("seed", uint64_t{0});
    spec.duration_ms = j.value("duration_ms", 0L);
    if (j.contains("config")) spec.config_json = j.at("config").dump();
    return spec;
}

}  // namespace agesim
