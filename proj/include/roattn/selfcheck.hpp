#pragma once

// Named verification checks shared by the `check` CLI command and the
// acceptance suite. Each check is tagged with the module it covers and, when
// it implements an acceptance criterion, the criterion number.

#include <string>
#include <vector>

#include "roattn/config.hpp"

namespace roattn::check {

struct CheckResult {
    std::string name;     // "<module>.<check>"
    int criterion = 0;    // 0 for supplemental checks
    bool passed = false;
    std::string detail;   // worst-case metrics
    double seconds = 0.0;
};

// Runs every check whose name starts with `filter` (empty = all).
// `fixture_dir` points at the vendored annotation fixtures.
std::vector<CheckResult> run_checks(const config::RunConfig& cfg, const std::string& filter,
                                    const std::string& fixture_dir);

bool all_passed(const std::vector<CheckResult>& results);

// Prints the frozen-golden constants for the vanilla toy forward (hexfloat,
// scalar backend); used when the simulator arithmetic intentionally changes.
void print_golden();

}  // namespace roattn::check
