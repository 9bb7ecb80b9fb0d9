#pragma once

// Flat binary parameter container: versioned header, a manifest of
// (name, shape, offset) entries, then little-endian float64 payloads.

#include <string>

#include "roattn/attention_sim.hpp"

namespace roattn::ckpt {

inline constexpr char kMagic[8] = {'R', 'O', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

void save(const sim::SimParams& params, const std::string& path);

// Fills an existing parameter set (shapes must match the checkpoint).
void load(sim::SimParams& params, const std::string& path);

}  // namespace roattn::ckpt
