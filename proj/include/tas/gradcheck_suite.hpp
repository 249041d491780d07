#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tas/gradcheck.hpp"
#include "tas/losses.hpp"

namespace tas {

struct SuiteOptions {
    int n_inputs = 10;
    int coords_per_input = 200;  // per check target and input (capped by dim)
    double h = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 971203;  // frozen known-good default
    bool include_backbone = true;
    LossConfig loss;  // defaults feed the Table-1-style checks
};

struct SuiteCheck {
    std::string name;
    double max_rel_err = 0.0;
    int n_checked = 0;
    bool passed = true;
    std::string worst;  // location of the worst coordinate
};

struct SuiteReport {
    double tolerance = 0.0;
    std::vector<SuiteCheck> checks;

    bool all_passed() const;
    const SuiteCheck* worst_check() const;  // nullptr when empty
    std::string to_text() const;
};

// Central-difference verification of every analytic gradient: the two
// boundary-loss assignments, the shape loss with and without the
// non-boundary restriction, the model loss, the combined objective, the
// warm-up zero contract, and (optionally) every parameter block of a
// tiny one-stage backbone.
SuiteReport run_gradcheck_suite(const SuiteOptions& opts);

}  // namespace tas
