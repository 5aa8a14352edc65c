#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/fields.hpp"
#include "strataflow/group_action.hpp"
#include "strataflow/kernels.hpp"
#include "strataflow/point_cloud.hpp"

namespace strataflow {

struct BracketOptions {
    int depth = 3;         // maximum bracket nesting, hard-capped at 4
    double h = 1e-5;       // base finite-difference step at unit scale
    double svd_tol = 1e-6; // numerical rank: sigma > svd_tol * sigma_max
};

inline constexpr int kMaxBracketDepth = 4;

namespace detail {

/// Vector field on a flat R^m, the common currency of the bracket engine.
/// Field objects and stacked ensembles are adapted into this form.
struct FlatField {
    long size = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eval;

    static FlatField of(const Field& f, int n, int d) {
        FlatField ff;
        ff.size = static_cast<long>(n) * d;
        ff.eval = [f, n, d](const Eigen::VectorXd& x) { return f.eval(PointCloud(n, d, x)); };
        return ff;
    }

    /// N-fold evaluation: the same field applied to each cloud of the list,
    /// results concatenated. Clouds may have different point counts.
    static FlatField n_fold(const Field& f, const std::vector<PointCloud>& clouds) {
        FlatField ff;
        std::vector<std::pair<int, int>> shapes;
        long total = 0;
        for (const auto& q : clouds) {
            shapes.emplace_back(q.n, q.d);
            total += q.data.size();
        }
        ff.size = total;
        ff.eval = [f, shapes, total](const Eigen::VectorXd& x) {
            Eigen::VectorXd out(total);
            long off = 0;
            for (const auto& [n, d] : shapes) {
                const long len = static_cast<long>(n) * d;
                out.segment(off, len) = f.eval(PointCloud(n, d, x.segment(off, len)));
                off += len;
            }
            return out;
        };
        return ff;
    }
};

inline Eigen::VectorXd flat_jvp(const FlatField& f, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& v, double h) {
    if (h <= 0.0) throw ConfigError("finite-difference step must be positive");
    const Eigen::VectorXd plus = f.eval(x + h * v);
    const Eigen::VectorXd minus = f.eval(x - h * v);
    Eigen::VectorXd out = (plus - minus) / (2.0 * h);
    if (!out.allFinite()) throw NumericError("non-finite directional derivative");
    return out;
}

/// [X,Y](x) = DY(x) X(x) - DX(x) Y(x), central differences with the step
/// scaled by (1 + |x|).
inline Eigen::VectorXd flat_bracket(const FlatField& x_field, const FlatField& y_field,
                                    const Eigen::VectorXd& x, double h) {
    const double hq = h * (1.0 + x.norm());
    const Eigen::VectorXd xv = x_field.eval(x);
    const Eigen::VectorXd yv = y_field.eval(x);
    return flat_jvp(y_field, x, xv, hq) - flat_jvp(x_field, x, yv, hq);
}

inline FlatField bracket_field(const FlatField& x_field, const FlatField& y_field, double h) {
    FlatField ff;
    ff.size = y_field.size;
    ff.eval = [x_field, y_field, h](const Eigen::VectorXd& x) {
        return flat_bracket(x_field, y_field, x, h);
    };
    return ff;
}

struct BracketWord {
    std::string label;
    FlatField field;
};

/// Formal words up to the requested depth: the base fields, then every
/// [X_j, w] with w from the previous level, syntactic self-brackets skipped
/// and exact label repeats deduplicated.
inline std::vector<BracketWord> enumerate_words(const std::vector<FlatField>& base, int depth,
                                                double h) {
    if (depth < 0) throw ConfigError("bracket depth must be nonnegative");
    if (depth > kMaxBracketDepth)
        throw CapabilityError("bracket depth " + std::to_string(depth) +
                              " exceeds the nested finite-difference limit " +
                              std::to_string(kMaxBracketDepth));
    std::vector<BracketWord> words;
    std::vector<BracketWord> level;
    for (std::size_t j = 0; j < base.size(); ++j)
        level.push_back({"X" + std::to_string(j + 1), base[j]});
    words = level;
    for (int m = 1; m <= depth; ++m) {
        std::vector<BracketWord> next;
        for (std::size_t j = 0; j < base.size(); ++j) {
            const std::string base_label = "X" + std::to_string(j + 1);
            for (const auto& w : level) {
                if (w.label == base_label) continue;
                next.push_back(
                    {"[" + base_label + "," + w.label + "]", bracket_field(base[j], w.field, h)});
            }
        }
        level = std::move(next);
        for (const auto& w : level) {
            bool seen = false;
            for (const auto& u : words)
                if (u.label == w.label) { seen = true; break; }
            if (!seen) words.push_back(w);
        }
    }
    return words;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Directional derivatives and brackets on clouds
// ---------------------------------------------------------------------------

/// Central difference (field(q + h v) - field(q - h v)) / (2h).
inline Eigen::VectorXd jvp(const Field& field, const PointCloud& q, const Eigen::VectorXd& v,
                           double h) {
    if (v.size() != q.data.size()) throw ConfigError("direction length does not match cloud");
    return detail::flat_jvp(detail::FlatField::of(field, q.n, q.d), q.data, v, h);
}

/// Commutator vector [X,Y](q) = DY(q) X(q) - DX(q) Y(q).
inline Eigen::VectorXd lie_bracket(const Field& x_field, const Field& y_field,
                                   const PointCloud& q, double h = 1e-5) {
    return detail::flat_bracket(detail::FlatField::of(x_field, q.n, q.d),
                                detail::FlatField::of(y_field, q.n, q.d), q.data, h);
}

/// ad_X^k Y (q): ad^0 = Y(q), ad^k = [X, ad^{k-1} Y] via nested brackets.
inline Eigen::VectorXd ad_power(const Field& x_field, const Field& y_field, const PointCloud& q,
                                int k, double h = 1e-5, int max_depth = kMaxBracketDepth) {
    if (k < 0) throw ConfigError("ad power must be nonnegative");
    if (k > max_depth)
        throw CapabilityError("ad power " + std::to_string(k) +
                              " exceeds the nested finite-difference limit " +
                              std::to_string(max_depth));
    const auto xf = detail::FlatField::of(x_field, q.n, q.d);
    auto w = detail::FlatField::of(y_field, q.n, q.d);
    for (int i = 0; i < k; ++i) w = detail::bracket_field(xf, w, h);
    return w.eval(q.data);
}

// ---------------------------------------------------------------------------
// Stratum tangent spaces
// ---------------------------------------------------------------------------

/// Orthonormal basis of the velocity assignments constant on each
/// coincidence block: the tangent space of the stratum through q for the
/// permutation action. Dimension d x (number of blocks).
struct StratumTangent {
    StratumSignature signature;
    int dimension = 0;
    Eigen::MatrixXd basis; // nd x dimension, orthonormal columns
};

inline StratumTangent stratum_tangent(const PointCloud& q, double tol = 0.0) {
    StratumTangent t;
    t.signature = stratum_signature(q, tol);
    const int blocks = static_cast<int>(t.signature.blocks.size());
    t.dimension = blocks * q.d;
    t.basis = Eigen::MatrixXd::Zero(q.data.size(), t.dimension);
    int col = 0;
    for (const auto& block : t.signature.blocks) {
        const double w = 1.0 / std::sqrt(static_cast<double>(block.size()));
        for (int a = 0; a < q.d; ++a, ++col)
            for (int i : block) t.basis(static_cast<long>(i) * q.d + a, col) = w;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Bracket span ranks
// ---------------------------------------------------------------------------

/// Bracket words evaluated at a base configuration, their projection onto
/// the stratum tangent space, and the resulting numerical rank.
struct BracketBasis {
    std::vector<Eigen::VectorXd> vectors;
    std::vector<std::string> labels;
    std::vector<double> singular_values; // descending
    int rank = 0;
    int target_dimension = 0;
    bool generating = false;
};

namespace detail {

inline BracketBasis rank_of_words(const std::vector<BracketWord>& words, const Eigen::VectorXd& x,
                                  const Eigen::MatrixXd& tangent_basis, int target_dim,
                                  double svd_tol) {
    BracketBasis out;
    out.target_dimension = target_dim;
    Eigen::MatrixXd coeffs(tangent_basis.cols(), static_cast<long>(words.size()));
    for (std::size_t w = 0; w < words.size(); ++w) {
        Eigen::VectorXd v;
        try {
            v = words[w].field.eval(x);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " while evaluating bracket word " +
                                   words[w].label,
                               e.index());
        }
        if (!v.allFinite())
            throw NumericError("non-finite value of bracket word " + words[w].label);
        out.vectors.push_back(v);
        out.labels.push_back(words[w].label);
        coeffs.col(static_cast<long>(w)) = tangent_basis.transpose() * v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(coeffs);
    const Eigen::VectorXd sv = svd.singularValues();
    out.singular_values.assign(sv.data(), sv.data() + sv.size());
    const double top = out.singular_values.empty() ? 0.0 : out.singular_values.front();
    if (top > 0.0)
        for (double s : out.singular_values)
            if (s > svd_tol * top) ++out.rank;
    out.generating = (out.rank == out.target_dimension);
    return out;
}

} // namespace detail

/// Rank of the iterated-bracket span of a field tuple at q, measured inside
/// the stratum tangent space. generating == true when the span fills it.
inline BracketBasis bracket_span_rank(const std::vector<Field>& fields, const PointCloud& q,
                                      int depth, double h = 1e-5, double svd_tol = 1e-6) {
    if (fields.empty()) throw ConfigError("bracket rank needs at least one field");
    std::vector<detail::FlatField> base;
    for (const auto& f : fields) base.push_back(detail::FlatField::of(f, q.n, q.d));
    const auto words = detail::enumerate_words(base, depth, h);
    const StratumTangent tangent = stratum_tangent(q, 0.0);
    return detail::rank_of_words(words, q.data, tangent.basis, tangent.dimension, svd_tol);
}

inline BracketBasis bracket_span_rank(const std::vector<Field>& fields, const PointCloud& q,
                                      const BracketOptions& opts) {
    return bracket_span_rank(fields, q, opts.depth, opts.h, opts.svd_tol);
}

/// N-fold version: the same tuple drives N non-interacting clouds; the span
/// must fill the product of the per-cloud stratum tangents. Clouds lying on
/// a common permutation orbit are rejected, mirroring the excluded diagonal
/// of the N-fold configuration space.
inline BracketBasis ensemble_bracket_rank(const std::vector<Field>& fields,
                                          const std::vector<PointCloud>& clouds, int depth,
                                          double h = 1e-5, double svd_tol = 1e-6) {
    if (fields.empty()) throw ConfigError("bracket rank needs at least one field");
    if (clouds.empty()) throw ConfigError("ensemble rank needs at least one cloud");
    for (std::size_t i = 0; i < clouds.size(); ++i)
        for (std::size_t j = i + 1; j < clouds.size(); ++j)
            if (clouds[i].same_shape(clouds[j]) && orbit_distance(clouds[i], clouds[j]) == 0.0)
                throw PreconditionError("ensemble clouds " + std::to_string(i) + " and " +
                                        std::to_string(j) + " lie on the same orbit");

    std::vector<detail::FlatField> base;
    for (const auto& f : fields) base.push_back(detail::FlatField::n_fold(f, clouds));
    const auto words = detail::enumerate_words(base, depth, h);

    long total = 0;
    int target = 0;
    std::vector<StratumTangent> tangents;
    for (const auto& q : clouds) {
        tangents.push_back(stratum_tangent(q, 0.0));
        total += q.data.size();
        target += tangents.back().dimension;
    }
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(total, target);
    long row = 0;
    int col = 0;
    for (std::size_t c = 0; c < clouds.size(); ++c) {
        basis.block(row, col, clouds[c].data.size(), tangents[c].dimension) = tangents[c].basis;
        row += clouds[c].data.size();
        col += tangents[c].dimension;
    }

    Eigen::VectorXd stacked(total);
    long off = 0;
    for (const auto& q : clouds) {
        stacked.segment(off, q.data.size()) = q.data;
        off += q.data.size();
    }
    return detail::rank_of_words(words, stacked, basis, target, svd_tol);
}

inline BracketBasis ensemble_bracket_rank(const std::vector<Field>& fields,
                                          const std::vector<PointCloud>& clouds,
                                          const BracketOptions& opts) {
    return ensemble_bracket_rank(fields, clouds, opts.depth, opts.h, opts.svd_tol);
}

// ---------------------------------------------------------------------------
// Randomized repair of non-generating tuples
// ---------------------------------------------------------------------------

struct PerturbReport {
    std::vector<Field> fields;
    int perturbations = 0;
    std::vector<bool> sample_generating;
    bool all_generating = false;
};

/// While some sample cloud fails the rank test, add a fresh seeded random
/// Fourier kernel of the given magnitude to one field (round-robin over the
/// tuple) and re-test. Returns the best tuple seen when the budget runs out.
inline PerturbReport perturb_until_generating(const std::vector<Field>& fields,
                                              const std::vector<PointCloud>& sample_clouds,
                                              int budget, double magnitude, std::uint64_t seed,
                                              const BracketOptions& opts = {}) {
    if (fields.empty()) throw ConfigError("perturbation needs at least one field");
    if (sample_clouds.empty()) throw ConfigError("perturbation needs at least one sample cloud");
    if (budget < 0) throw ConfigError("perturbation budget must be nonnegative");
    const int d = sample_clouds.front().d;

    auto evaluate = [&](const std::vector<Field>& tuple) {
        std::vector<bool> pass;
        pass.reserve(sample_clouds.size());
        for (const auto& q : sample_clouds)
            pass.push_back(bracket_span_rank(tuple, q, opts).generating);
        return pass;
    };
    auto count_pass = [](const std::vector<bool>& pass) {
        int c = 0;
        for (bool b : pass) c += b ? 1 : 0;
        return c;
    };

    PerturbReport best;
    best.fields = fields;
    best.sample_generating = evaluate(fields);
    best.all_generating = count_pass(best.sample_generating) ==
                          static_cast<int>(sample_clouds.size());
    if (best.all_generating || budget == 0) return best;

    std::vector<Field> current = fields;
    for (int iter = 0; iter < budget; ++iter) {
        const std::size_t target = static_cast<std::size_t>(iter) % fields.size();
        const std::uint64_t sub_seed = Rng::derive(seed, static_cast<std::uint64_t>(iter));
        current[target] = current[target] + lifted_field(fourier_kernel(d, 6, sub_seed, magnitude));

        PerturbReport cand;
        cand.fields = current;
        cand.perturbations = iter + 1;
        cand.sample_generating = evaluate(current);
        cand.all_generating =
            count_pass(cand.sample_generating) == static_cast<int>(sample_clouds.size());
        if (count_pass(cand.sample_generating) > count_pass(best.sample_generating)) best = cand;
        if (cand.all_generating) return cand;
    }
    return best;
}

} // namespace strataflow
