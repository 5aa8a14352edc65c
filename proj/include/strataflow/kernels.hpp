#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/point_cloud.hpp"
#include "strataflow/rng.hpp"

namespace strataflow {

/// A point cloud viewed as an empirical measure: the points in canonical
/// (lexicographic) order plus the cached mean. Kernels reduce over
/// `sorted`, which makes every evaluation independent of point labels down
/// to the last bit.
struct EmpiricalMeasure {
    PointCloud sorted;
    Eigen::VectorXd mean;

    static EmpiricalMeasure of(const PointCloud& q) {
        EmpiricalMeasure mu;
        mu.sorted = PointCloud(q.n, q.d);
        const auto order = sorted_point_order(q);
        for (int i = 0; i < q.n; ++i) mu.sorted.point(i) = q.point(order[i]);
        mu.mean = Eigen::VectorXd::Zero(q.d);
        for (int i = 0; i < q.n; ++i) mu.mean += mu.sorted.point(i);
        mu.mean /= static_cast<double>(q.n);
        return mu;
    }
};

/// Evaluation rule f(x, mu) -> velocity of the point x under the empirical
/// measure mu. Implementations must be deterministic and reduce over the
/// measure's canonical point order only.
class KernelImpl {
public:
    virtual ~KernelImpl() = default;
    virtual Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const EmpiricalMeasure& mu) const = 0;
    virtual int dim() const = 0;
};

/// Value-semantic handle to an immutable kernel; cheap to copy and safe to
/// share across threads.
class Kernel {
public:
    Kernel() = default;
    explicit Kernel(std::shared_ptr<const KernelImpl> impl) : impl_(std::move(impl)) {}

    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const {
        return impl_->eval(x, mu);
    }

    int dim() const { return impl_->dim(); }
    bool valid() const { return impl_ != nullptr; }

private:
    std::shared_ptr<const KernelImpl> impl_;
};

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Softmax weights with the max subtracted from every logit before
/// exponentiation; immune to overflow and invariant (to rounding) under
/// adding a constant to all logits.
inline Eigen::VectorXd max_shifted_softmax(const Eigen::VectorXd& logits) {
    const double shift = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - shift).exp();
    return w / w.sum();
}

// ---------------------------------------------------------------------------
// Kernel variants
// ---------------------------------------------------------------------------

namespace kernels {

class Zero final : public KernelImpl {
public:
    explicit Zero(int d) : d_(d) {}
    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>&,
                         const EmpiricalMeasure&) const override {
        return Eigen::VectorXd::Zero(d_);
    }
    int dim() const override { return d_; }

private:
    int d_;
};

/// Arbitrary user rule; the function must only consume the measure through
/// its canonical order to stay permutation safe.
class Custom final : public KernelImpl {
public:
    using Fn = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&,
                                             const EmpiricalMeasure&)>;
    Custom(int d, Fn fn) : d_(d), fn_(std::move(fn)) {}
    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        return fn_(x, mu);
    }
    int dim() const override { return d_; }

private:
    int d_;
    Fn fn_;
};

struct AttentionHead {
    Eigen::MatrixXd query;
    Eigen::MatrixXd key;
    Eigen::MatrixXd value;
};

/// Softmax attention: sum_h sum_j w_{h,j} V_h x_j with logits <Q_h x, K_h x_j>.
class Attention final : public KernelImpl {
public:
    Attention(int d, std::vector<AttentionHead> heads) : d_(d), heads_(std::move(heads)) {
        if (heads_.empty()) throw ConfigError("attention kernel needs at least one head");
        for (const auto& h : heads_) {
            if (h.query.rows() != d_ || h.query.cols() != d_ || h.key.rows() != d_ ||
                h.key.cols() != d_ || h.value.rows() != d_ || h.value.cols() != d_)
                throw ConfigError("attention head matrices must be d x d");
            if (!h.query.allFinite() || !h.key.allFinite() || !h.value.allFinite())
                throw NumericError("attention head matrix has non-finite entries");
        }
    }

    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        const int n = mu.sorted.n;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
        Eigen::VectorXd logits(n);
        for (const auto& head : heads_) {
            const Eigen::VectorXd qx = head.query * x;
            for (int j = 0; j < n; ++j) logits[j] = qx.dot(head.key * mu.sorted.point(j));
            const Eigen::VectorXd w = max_shifted_softmax(logits);
            for (int j = 0; j < n; ++j) out.noalias() += w[j] * (head.value * mu.sorted.point(j));
        }
        return out;
    }

    int dim() const override { return d_; }
    const std::vector<AttentionHead>& heads() const { return heads_; }

private:
    int d_;
    std::vector<AttentionHead> heads_;
};

/// Pairwise interaction lifted over the measure: f(x, mu) = sum_j K(x, x_j).
class Pairwise final : public KernelImpl {
public:
    using PairRule = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&,
                                                   const Eigen::Ref<const Eigen::VectorXd>&)>;
    Pairwise(int d, PairRule rule) : d_(d), rule_(std::move(rule)) {}

    /// K(x,y) = weight * (y - x): linear attraction toward every point.
    static std::shared_ptr<const Pairwise> spring(int d, double weight) {
        return std::make_shared<const Pairwise>(
            d, [weight](const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y) -> Eigen::VectorXd {
                return weight * (y - x);
            });
    }

    /// K(x,y) = weight * exp(-|x-y|^2 / (2 l^2)) * (y - x).
    static std::shared_ptr<const Pairwise> gaussian(int d, double weight, double length) {
        if (length <= 0.0) throw ConfigError("gaussian pair kernel needs length > 0");
        const double inv2l2 = 1.0 / (2.0 * length * length);
        return std::make_shared<const Pairwise>(
            d, [weight, inv2l2](const Eigen::Ref<const Eigen::VectorXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& y) -> Eigen::VectorXd {
                return weight * std::exp(-(x - y).squaredNorm() * inv2l2) * (y - x);
            });
    }

    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
        for (int j = 0; j < mu.sorted.n; ++j) out += rule_(x, mu.sorted.point(j));
        return out;
    }

    int dim() const override { return d_; }

private:
    int d_;
    PairRule rule_;
};

/// Seeded random Fourier features, the library's stand-in for a "generic"
/// interaction law: f(x, mu) = sum_r cos(w_r . x + w'_r . mean(mu) + phi_r) v_r.
/// Smooth in x and in the points of mu; bit-identical for equal seeds.
class RandomFourier final : public KernelImpl {
public:
    RandomFourier(int d, int features, std::uint64_t seed, double scale = 1.0)
        : d_(d), seed_(seed) {
        if (features < 1) throw ConfigError("fourier kernel needs features >= 1");
        Rng rng(seed);
        freq_x_.resize(features);
        freq_mean_.resize(features);
        phase_.resize(features);
        out_vec_.resize(features);
        const double amp = scale / std::sqrt(static_cast<double>(features));
        for (int r = 0; r < features; ++r) {
            freq_x_[r] = Eigen::VectorXd::NullaryExpr(d, [&](long) { return rng.normal(); });
            freq_mean_[r] = Eigen::VectorXd::NullaryExpr(d, [&](long) { return rng.normal(); });
            phase_[r] = rng.uniform(0.0, 6.283185307179586);
            out_vec_[r] =
                Eigen::VectorXd::NullaryExpr(d, [&](long) { return amp * rng.normal(); });
        }
    }

    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
        for (std::size_t r = 0; r < freq_x_.size(); ++r) {
            const double arg = freq_x_[r].dot(x) + freq_mean_[r].dot(mu.mean) + phase_[r];
            out += std::cos(arg) * out_vec_[r];
        }
        return out;
    }

    int dim() const override { return d_; }
    std::uint64_t seed() const { return seed_; }

private:
    int d_;
    std::uint64_t seed_;
    std::vector<Eigen::VectorXd> freq_x_, freq_mean_;
    std::vector<double> phase_;
    std::vector<Eigen::VectorXd> out_vec_;
};

class Sum final : public KernelImpl {
public:
    Sum(Kernel a, Kernel b) : a_(std::move(a)), b_(std::move(b)) {
        if (a_.dim() != b_.dim()) throw ConfigError("kernel sum dimension mismatch");
    }
    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        return a_.eval(x, mu) + b_.eval(x, mu);
    }
    int dim() const override { return a_.dim(); }

private:
    Kernel a_, b_;
};

class Scaled final : public KernelImpl {
public:
    Scaled(Kernel k, double factor) : k_(std::move(k)), factor_(factor) {}
    Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const EmpiricalMeasure& mu) const override {
        return factor_ * k_.eval(x, mu);
    }
    int dim() const override { return k_.dim(); }

private:
    Kernel k_;
    double factor_;
};

} // namespace kernels

inline Kernel zero_kernel(int d) { return Kernel(std::make_shared<kernels::Zero>(d)); }

inline Kernel custom_kernel(int d, kernels::Custom::Fn fn) {
    return Kernel(std::make_shared<kernels::Custom>(d, std::move(fn)));
}

inline Kernel attention_kernel(int d, std::vector<kernels::AttentionHead> heads) {
    return Kernel(std::make_shared<kernels::Attention>(d, std::move(heads)));
}

inline Kernel spring_kernel(int d, double weight) {
    return Kernel(kernels::Pairwise::spring(d, weight));
}

inline Kernel gaussian_pair_kernel(int d, double weight, double length) {
    return Kernel(kernels::Pairwise::gaussian(d, weight, length));
}

inline Kernel fourier_kernel(int d, int features, std::uint64_t seed, double scale = 1.0) {
    return Kernel(std::make_shared<kernels::RandomFourier>(d, features, seed, scale));
}

inline Kernel operator+(const Kernel& a, const Kernel& b) {
    return Kernel(std::make_shared<kernels::Sum>(a, b));
}

inline Kernel operator*(double factor, const Kernel& k) {
    return Kernel(std::make_shared<kernels::Scaled>(k, factor));
}

} // namespace strataflow
