#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/rng.hpp"

namespace strataflow {

/// Ordered list of n points in R^d, stored flat: point i occupies
/// coordinates [i*d, (i+1)*d) of `data`. The flat layout is shared with
/// velocity vectors, so fields and integrators work on `data` directly.
struct PointCloud {
    int n = 0;
    int d = 0;
    Eigen::VectorXd data;

    PointCloud() = default;

    PointCloud(int n_, int d_) : n(n_), d(d_), data(Eigen::VectorXd::Zero(n_ * d_)) {
        if (n_ < 1 || d_ < 1) throw ConfigError("point cloud needs n >= 1 and d >= 1");
    }

    PointCloud(int n_, int d_, Eigen::VectorXd flat) : n(n_), d(d_), data(std::move(flat)) {
        if (n_ < 1 || d_ < 1) throw ConfigError("point cloud needs n >= 1 and d >= 1");
        if (data.size() != static_cast<long>(n_) * d_)
            throw ConfigError("flat data length does not match n*d");
    }

    static PointCloud from_points(std::initializer_list<std::initializer_list<double>> pts) {
        std::vector<std::vector<double>> rows;
        for (const auto& p : pts) rows.emplace_back(p);
        return from_points(rows);
    }

    static PointCloud from_points(const std::vector<std::vector<double>>& pts) {
        if (pts.empty()) throw ConfigError("point cloud needs at least one point");
        const int d = static_cast<int>(pts.front().size());
        PointCloud q(static_cast<int>(pts.size()), d);
        for (int i = 0; i < q.n; ++i) {
            if (static_cast<int>(pts[i].size()) != d)
                throw ConfigError("all points must have identical dimension");
            for (int a = 0; a < d; ++a) q.data[i * d + a] = pts[i][a];
        }
        return q;
    }

    Eigen::VectorBlock<const Eigen::VectorXd> point(int i) const {
        return data.segment(static_cast<long>(i) * d, d);
    }

    Eigen::VectorBlock<Eigen::VectorXd> point(int i) {
        return data.segment(static_cast<long>(i) * d, d);
    }

    /// Same shape, different coordinates.
    PointCloud with_data(Eigen::VectorXd flat) const { return PointCloud(n, d, std::move(flat)); }

    bool same_shape(const PointCloud& other) const { return n == other.n && d == other.d; }

    void require_same_shape(const PointCloud& other) const {
        if (!same_shape(other))
            throw ConfigError("point cloud shape mismatch: (" + std::to_string(n) + "," +
                              std::to_string(d) + ") vs (" + std::to_string(other.n) + "," +
                              std::to_string(other.d) + ")");
    }

    bool is_finite() const { return data.allFinite(); }

    bool operator==(const PointCloud& other) const {
        return same_shape(other) && data == other.data;
    }
};

/// Lexicographic comparison of two points of the same dimension.
inline bool lex_less(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b) {
    for (long i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

/// Index order sorting the points lexicographically. Used to make every
/// measure-dependent reduction independent of point labels.
inline std::vector<int> sorted_point_order(const PointCloud& q) {
    std::vector<int> order(q.n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return lex_less(q.point(i), q.point(j)); });
    return order;
}

/// Cloud with points drawn i.i.d. from N(0, scale^2)^d.
inline PointCloud random_cloud(int n, int d, Rng& rng, double scale = 1.0) {
    PointCloud q(n, d);
    for (long i = 0; i < q.data.size(); ++i) q.data[i] = scale * rng.normal();
    return q;
}

} // namespace strataflow
