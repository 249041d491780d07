#pragma once

#include <functional>
#include <random>
#include <string>

#include "tas/core.hpp"

namespace tas {

struct FdReport {
    double max_rel_err = 0.0;
    int worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int n_checked = 0;
    bool passed(double tolerance) const { return max_rel_err <= tolerance; }
};

// Central-difference check of an analytic gradient on a random subset of
// coordinates. `f` evaluates the scalar loss at a flattened parameter
// vector; relative error per coordinate is |analytic - numeric| /
// max(1, |numeric|). Coordinates are drawn without replacement when
// max_coords < dim, otherwise all are checked.
FdReport finite_difference_report(const std::function<double(const Vector&)>& f,
                                  const Vector& x0, const Vector& analytic_grad, double h,
                                  int max_coords, std::mt19937_64& rng);

// Same, but throws CheckFailedError (message names the worst coordinate)
// when the maximum relative error exceeds `tolerance`.
FdReport finite_difference_check(const std::function<double(const Vector&)>& f,
                                 const Vector& x0, const Vector& analytic_grad, double h,
                                 double tolerance, int max_coords, std::mt19937_64& rng,
                                 const std::string& what = "");

}  // namespace tas
