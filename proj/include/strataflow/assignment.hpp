#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace strataflow {

struct AssignmentResult {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square cost matrix,
/// shortest-augmenting-path formulation with dual potentials, O(n^3).
inline AssignmentResult solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }

    AssignmentResult res;
    res.row_to_col.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (match[j] > 0) {
            res.row_to_col[match[j] - 1] = j - 1;
            res.cost += cost(match[j] - 1, j - 1);
        }
    }
    return res;
}

} // namespace strataflow
