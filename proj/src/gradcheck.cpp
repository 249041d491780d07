#include "tas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "tas/errors.hpp"

namespace tas {

FdReport finite_difference_report(const std::function<double(const Vector&)>& f,
                                  const Vector& x0, const Vector& analytic_grad, double h,
                                  int max_coords, std::mt19937_64& rng) {
    const int dim = static_cast<int>(x0.size());
    if (analytic_grad.size() != dim) {
        throw ShapeMismatchError("finite_difference_report: gradient size " +
                                 std::to_string(analytic_grad.size()) + " != point size " +
                                 std::to_string(dim));
    }
    std::vector<int> coords(dim);
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && max_coords < dim) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }

    FdReport report;
    Vector x = x0;
    for (int i : coords) {
        const double save = x[i];
        x[i] = save + h;
        const double fp = f(x);
        x[i] = save - h;
        const double fm = f(x);
        x[i] = save;
        const double numeric = (fp - fm) / (2.0 * h);
        const double rel =
            std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric));
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_coord = i;
            report.worst_analytic = analytic_grad[i];
            report.worst_numeric = numeric;
        }
        report.n_checked += 1;
    }
    return report;
}

FdReport finite_difference_check(const std::function<double(const Vector&)>& f,
                                 const Vector& x0, const Vector& analytic_grad, double h,
                                 double tolerance, int max_coords, std::mt19937_64& rng,
                                 const std::string& what) {
    FdReport report = finite_difference_report(f, x0, analytic_grad, h, max_coords, rng);
    if (!report.passed(tolerance)) {
        std::ostringstream msg;
        msg << "gradient check failed";
        if (!what.empty()) msg << " for " << what;
        msg << ": max rel err " << report.max_rel_err << " at coordinate "
            << report.worst_coord << " (analytic " << report.worst_analytic << ", numeric "
            << report.worst_numeric << ", tolerance " << tolerance << ")";
        throw CheckFailedError(msg.str());
    }
    return report;
}

}  // namespace tas
