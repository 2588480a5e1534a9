#ifndef AGESIM_CONFIG_HPP
#define AGESIM_CONFIG_HPP

#include <string>

#include <json.hpp>

#include "agesim/intersection.hpp"
#include "agesim/platoon.hpp"

namespace agesim {

// Top-level run description parsed from the user's JSON config. Every field
// has a default; unknown keys are rejected with the offending path so typos
// do not silently fall back to defaults.
struct RootConfig {
    std::string scenario = "platoon";  // "platoon" | "intersection"
    uint64_t seed = 1;
    int runs = 1;

    std::string comms = "mode4";  // "mode4" | "ideal" | "none"
    std::string penalty = "linear";  // "linear" | "quadratic" | "exceedance"
    double penalty_bound_ms = 100.0;  // exceedance threshold

    ChannelModel channel;
    SpsConfig sps;
    ResourceGrid grid;
    UpdatePolicyCfg policy;

    PlatoonConfig platoon;          // scenario block, shared fields overridden below
    IntersectionConfig intersection;
};

// Parses and validates; throws std::runtime_error naming the bad key/value.
RootConfig parse_root_config(const nlohmann::json& j);
RootConfig load_root_config(const std::string& path);

// Fully materialized snapshot (defaults filled in) for embedding in outputs.
nlohmann::json materialize(const RootConfig& cfg);

// Scenario configs with the shared channel/mac/policy blocks applied.
PlatoonConfig make_platoon_config(const RootConfig& cfg);
IntersectionConfig make_intersection_config(const RootConfig& cfg);

CommsMode parse_comms(const std::string& s);
AgePenalty parse_penalty(const std::string& kind, double bound_ms);

}  // namespace agesim

#endif
