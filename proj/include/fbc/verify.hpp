#pragma once

#include <string>
#include <vector>

#include "fbc/analysis.hpp"

namespace fbc {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    std::string bound;   // tolerance the measurement is held to
    std::string details; // extra context, optional
};

struct VerifyOptions {
    std::uint64_t seed = 7;
    // Fault injection for testing the suite itself: builds the adversarial
    // path without the reversal op, so the GRL checks must flag it.
    bool perturb_grl = false;
};

struct VerifyReport {
    bool all_passed = false;
    std::vector<CheckResult> checks;
    GradientReport sample_gradient;     // canonical seeded episode expansion
    DivergenceReport sample_divergence; // canonical seeded divergence estimates
};

/// Run the full numerical invariant suite: gradient checks, expansion
/// scaling, the product-rule identity, reversal-sign contracts, bounds and
/// determinism checks.
VerifyReport run_verification(const VerifyOptions& opts);

std::string verify_report_to_json(const VerifyReport& report);

} // namespace fbc
