#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/group_action.hpp"
#include "strataflow/kernels.hpp"
#include "strataflow/point_cloud.hpp"

namespace strataflow {

/// Velocity law on configuration space: V(q) is a flat nd vector attached
/// to the cloud q. Equivariance is a property, not a type: it is produced
/// by lifting a mean-field kernel or by group averaging, and checked with
/// equivariance_residual.
class FieldImpl {
public:
    virtual ~FieldImpl() = default;
    virtual Eigen::VectorXd eval(const PointCloud& q) const = 0;
};

class Field {
public:
    Field() = default;
    explicit Field(std::shared_ptr<const FieldImpl> impl) : impl_(std::move(impl)) {}

    Eigen::VectorXd eval(const PointCloud& q) const { return impl_->eval(q); }
    bool valid() const { return impl_ != nullptr; }

private:
    std::shared_ptr<const FieldImpl> impl_;
};

// ---------------------------------------------------------------------------
// Lift of a mean-field kernel
// ---------------------------------------------------------------------------

/// (f(x_1,mu),...,f(x_n,mu)) with coincidence-safe evaluation: f runs once
/// per distinct point and the result is broadcast, so exactly equal points
/// receive bit-identical velocities.
inline Eigen::VectorXd lift(const Kernel& kernel, const PointCloud& q) {
    if (kernel.dim() != q.d) throw ConfigError("kernel dimension does not match cloud");
    const EmpiricalMeasure mu = EmpiricalMeasure::of(q);
    Eigen::VectorXd out(q.data.size());
    std::vector<int> rep(q.n, -1); // index of the first point equal to i
    for (int i = 0; i < q.n; ++i) {
        for (int j = 0; j < i; ++j) {
            if (q.point(j) == q.point(i)) {
                rep[i] = j;
                break;
            }
        }
        if (rep[i] >= 0) {
            out.segment(i * q.d, q.d) = out.segment(rep[i] * q.d, q.d);
            continue;
        }
        const Eigen::VectorXd v = kernel.eval(q.point(i), mu);
        for (int a = 0; a < q.d; ++a) {
            if (!std::isfinite(v[a]))
                throw NumericError("kernel produced a non-finite velocity at point " +
                                       std::to_string(i),
                                   i);
        }
        out.segment(i * q.d, q.d) = v;
    }
    return out;
}

/// Convenience wrapper for a single query point: f(x, mu(q)).
inline Eigen::VectorXd attention_eval(const Kernel& kernel, const Eigen::VectorXd& x,
                                      const PointCloud& q) {
    if (kernel.dim() != q.d || x.size() != q.d)
        throw ConfigError("kernel/query dimension does not match cloud");
    return kernel.eval(x, EmpiricalMeasure::of(q));
}

namespace fields {

class Lifted final : public FieldImpl {
public:
    explicit Lifted(Kernel k) : kernel_(std::move(k)) {}
    Eigen::VectorXd eval(const PointCloud& q) const override { return lift(kernel_, q); }
    const Kernel& kernel() const { return kernel_; }

private:
    Kernel kernel_;
};

/// Arbitrary raw rule V(q); not assumed equivariant.
class Raw final : public FieldImpl {
public:
    using Fn = std::function<Eigen::VectorXd(const PointCloud&)>;
    explicit Raw(Fn fn) : fn_(std::move(fn)) {}
    Eigen::VectorXd eval(const PointCloud& q) const override { return fn_(q); }

private:
    Fn fn_;
};

/// V(q) = A q on the flat configuration vector.
class Linear final : public FieldImpl {
public:
    explicit Linear(Eigen::MatrixXd a) : a_(std::move(a)) {
        if (a_.rows() != a_.cols()) throw ConfigError("linear field matrix must be square");
    }
    Eigen::VectorXd eval(const PointCloud& q) const override {
        if (q.data.size() != a_.rows()) throw ConfigError("linear field size mismatch");
        return a_ * q.data;
    }
    const Eigen::MatrixXd& matrix() const { return a_; }

private:
    Eigen::MatrixXd a_;
};

class Constant final : public FieldImpl {
public:
    explicit Constant(Eigen::VectorXd c) : c_(std::move(c)) {}
    Eigen::VectorXd eval(const PointCloud& q) const override {
        if (q.data.size() != c_.size()) throw ConfigError("constant field size mismatch");
        return c_;
    }

private:
    Eigen::VectorXd c_;
};

/// Seeded random Fourier field directly on the nd configuration space;
/// generic and smooth but not equivariant. Feed it to average_over_group.
class RawFourier final : public FieldImpl {
public:
    RawFourier(int n, int d, int features, std::uint64_t seed, double scale = 1.0)
        : n_(n), d_(d) {
        Rng rng(seed);
        const long size = static_cast<long>(n) * d;
        const double amp = scale / std::sqrt(static_cast<double>(features));
        for (int r = 0; r < features; ++r) {
            freq_.push_back(
                Eigen::VectorXd::NullaryExpr(size, [&](long) { return rng.normal(); }));
            phase_.push_back(rng.uniform(0.0, 6.283185307179586));
            out_.push_back(
                Eigen::VectorXd::NullaryExpr(size, [&](long) { return amp * rng.normal(); }));
        }
    }

    Eigen::VectorXd eval(const PointCloud& q) const override {
        if (q.n != n_ || q.d != d_) throw ConfigError("raw fourier field shape mismatch");
        Eigen::VectorXd v = Eigen::VectorXd::Zero(q.data.size());
        for (std::size_t r = 0; r < freq_.size(); ++r)
            v += std::cos(freq_[r].dot(q.data) + phase_[r]) * out_[r];
        return v;
    }

private:
    int n_, d_;
    std::vector<Eigen::VectorXd> freq_;
    std::vector<double> phase_;
    std::vector<Eigen::VectorXd> out_;
};

/// Group average (1/|G|) sum_g g . V(g^-1 . q), the finite-group averaging
/// operator. Elements are summed in the action's fixed order. Coincident
/// points joined by a pure swap in the group receive the block
/// representative's velocity, which is a no-op in exact arithmetic and
/// keeps coincidences bitwise intact along flows.
class Averaged final : public FieldImpl {
public:
    Averaged(Field raw, FiniteGroupAction action)
        : raw_(std::move(raw)), action_(std::move(action)) {}

    Eigen::VectorXd eval(const PointCloud& q) const override {
        if (q.n != action_.n() || q.d != action_.d())
            throw ConfigError("cloud shape does not match the averaging group");
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(q.data.size());
        for (int i = 0; i < action_.size(); ++i) {
            const GroupElement& g = action_.element(i);
            const PointCloud moved = g.inverse().apply(q);
            sum += g.apply_flat(raw_.eval(moved));
        }
        sum /= static_cast<double>(action_.size());
        broadcast_coincidences(q, sum);
        return sum;
    }

    const FiniteGroupAction& action() const { return action_; }

private:
    void broadcast_coincidences(const PointCloud& q, Eigen::VectorXd& v) const {
        for (int i = 0; i < q.n; ++i) {
            for (int j = 0; j < i; ++j) {
                if (action_.has_pure_swap(i, j) && q.point(i) == q.point(j)) {
                    v.segment(i * q.d, q.d) = v.segment(j * q.d, q.d);
                    break;
                }
            }
        }
    }

    Field raw_;
    FiniteGroupAction action_;
};

class Sum final : public FieldImpl {
public:
    Sum(Field a, Field b) : a_(std::move(a)), b_(std::move(b)) {}
    Eigen::VectorXd eval(const PointCloud& q) const override { return a_.eval(q) + b_.eval(q); }

private:
    Field a_, b_;
};

class Scaled final : public FieldImpl {
public:
    Scaled(Field f, double factor) : f_(std::move(f)), factor_(factor) {}
    Eigen::VectorXd eval(const PointCloud& q) const override { return factor_ * f_.eval(q); }

private:
    Field f_;
    double factor_;
};

} // namespace fields

inline Field lifted_field(Kernel k) {
    return Field(std::make_shared<fields::Lifted>(std::move(k)));
}

inline Field raw_field(fields::Raw::Fn fn) {
    return Field(std::make_shared<fields::Raw>(std::move(fn)));
}

inline Field linear_field(Eigen::MatrixXd a) {
    return Field(std::make_shared<fields::Linear>(std::move(a)));
}

inline Field constant_field(Eigen::VectorXd c) {
    return Field(std::make_shared<fields::Constant>(std::move(c)));
}

inline Field raw_fourier_field(int n, int d, int features, std::uint64_t seed,
                               double scale = 1.0) {
    return Field(std::make_shared<fields::RawFourier>(n, d, features, seed, scale));
}

inline Field operator+(const Field& a, const Field& b) {
    return Field(std::make_shared<fields::Sum>(a, b));
}

inline Field operator*(double factor, const Field& f) {
    return Field(std::make_shared<fields::Scaled>(f, factor));
}

/// Finite-group averaging operator: projects any raw field onto the
/// equivariant fields of the action.
inline Field average_over_group(Field raw, const FiniteGroupAction& action) {
    return Field(std::make_shared<fields::Averaged>(std::move(raw), action));
}

/// max_g | g . X(q) - X(g . q) | over the group, Euclidean norm on the flat
/// nd velocity. Zero exactly for equivariant fields.
inline double equivariance_residual(const Field& field, const FiniteGroupAction& action,
                                    const PointCloud& q) {
    if (q.n != action.n() || q.d != action.d())
        throw ConfigError("cloud shape does not match group action");
    const Eigen::VectorXd base = field.eval(q);
    double worst = 0.0;
    for (int i = 0; i < action.size(); ++i) {
        const GroupElement& g = action.element(i);
        const Eigen::VectorXd pushed = g.apply_flat(base);
        const Eigen::VectorXd moved = field.eval(g.apply(q));
        worst = std::max(worst, (pushed - moved).norm());
    }
    return worst;
}

} // namespace strataflow
