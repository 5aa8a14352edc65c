#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <vector>

namespace strataflow {

struct NelderMeadOptions {
    long max_evals = 10000;
    double f_spread_tol = 1e-16; // relative best-to-worst spread at termination
    double x_tol = 1e-13;        // simplex diameter at termination
    int restarts = 2;            // re-seed the simplex at the incumbent, shrinking steps
    double initial_step = 0.3;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = 0.0;
    long evals = 0;
};

/// Downhill simplex with standard coefficients (reflect 1, expand 2,
/// contract 1/2, shrink 1/2). Comparison-based, so any monotone rescaling of
/// the objective leaves the iterates unchanged.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                                    const Eigen::VectorXd& x0,
                                    const NelderMeadOptions& opts = {}) {
    const int n = static_cast<int>(x0.size());
    NelderMeadResult best;
    best.x = x0;
    best.f = fn(x0);
    best.evals = 1;
    if (n == 0) return best;

    double step = opts.initial_step;
    for (int round = 0; round <= opts.restarts; ++round) {
        std::vector<Eigen::VectorXd> xs(n + 1, best.x);
        std::vector<double> fs(n + 1, best.f);
        for (int i = 0; i < n; ++i) {
            xs[i + 1][i] += step;
            if (best.evals >= opts.max_evals) return best;
            fs[i + 1] = fn(xs[i + 1]);
            ++best.evals;
        }

        std::vector<int> order(n + 1);
        while (best.evals < opts.max_evals) {
            for (int i = 0; i <= n; ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return fs[a] < fs[b] || (fs[a] == fs[b] && a < b);
            });
            const int lo = order[0], hi = order[n], second_hi = order[n - 1];
            if (fs[lo] < best.f) {
                best.f = fs[lo];
                best.x = xs[lo];
            }

            double diameter = 0.0;
            for (int i = 1; i <= n; ++i) diameter = std::max(diameter, (xs[order[i]] - xs[lo]).norm());
            const double spread = fs[hi] - fs[lo];
            if (spread <= opts.f_spread_tol * (1.0 + std::abs(fs[lo])) ||
                diameter <= opts.x_tol * (1.0 + xs[lo].norm()))
                break;

            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
            for (int i = 0; i <= n; ++i)
                if (i != hi) centroid += xs[i];
            centroid /= static_cast<double>(n);

            auto eval = [&](const Eigen::VectorXd& x) {
                ++best.evals;
                return fn(x);
            };

            const Eigen::VectorXd xr = centroid + (centroid - xs[hi]);
            const double fr = eval(xr);
            if (fr < fs[lo]) {
                const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[hi]);
                const double fe = (best.evals < opts.max_evals) ? eval(xe) : fr + 1.0;
                if (fe < fr) {
                    xs[hi] = xe;
                    fs[hi] = fe;
                } else {
                    xs[hi] = xr;
                    fs[hi] = fr;
                }
            } else if (fr < fs[second_hi]) {
                xs[hi] = xr;
                fs[hi] = fr;
            } else {
                const bool outside = fr < fs[hi];
                const Eigen::VectorXd xc =
                    outside ? (centroid + 0.5 * (xr - centroid)).eval()
                            : (centroid + 0.5 * (xs[hi] - centroid)).eval();
                const double fc = eval(xc);
                if (fc < std::min(fr, fs[hi])) {
                    xs[hi] = xc;
                    fs[hi] = fc;
                } else {
                    // shrink toward the incumbent
                    for (int i = 0; i <= n; ++i) {
                        if (i == lo) continue;
                        xs[i] = xs[lo] + 0.5 * (xs[i] - xs[lo]);
                        if (best.evals >= opts.max_evals) break;
                        fs[i] = eval(xs[i]);
                    }
                }
            }
        }
        for (int i = 0; i <= n; ++i) {
            if (fs[i] < best.f) {
                best.f = fs[i];
                best.x = xs[i];
            }
        }
        step *= 0.2;
    }
    return best;
}

} // namespace strataflow
