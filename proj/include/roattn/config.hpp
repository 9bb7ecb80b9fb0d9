#pragma once

// Plain-text key=value configuration with one section per module. Unknown
// sections or keys are rejected; load -> serialize -> load is loss-free.

#include <string>

#include "roattn/attention_sim.hpp"
#include "roattn/geometry.hpp"

namespace roattn::config {

struct RunConfig {
    geom::AxgParams axg;
    sim::SimConfig sim;
    std::string input_path;
    std::string out_dir = "out";
    std::string kernel_backend = "auto";
};

RunConfig default_config();

RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");

std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

// Applies invariant checks and cross-field syncing (t_max is shared between
// the simulator and prior routing).
void finalize(RunConfig& cfg);

}  // namespace roattn::config
