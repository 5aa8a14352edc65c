#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "strataflow/assignment.hpp"
#include "strataflow/errors.hpp"
#include "strataflow/point_cloud.hpp"

namespace strataflow {

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// Bijection sigma on {0,...,n-1}. Acting on a cloud relabels points:
/// (sigma . q)_i = q_{sigma(i)}.
class Permutation {
public:
    Permutation() = default;

    explicit Permutation(std::vector<int> image) : image_(std::move(image)) {
        std::vector<char> seen(image_.size(), 0);
        for (int v : image_) {
            if (v < 0 || v >= static_cast<int>(image_.size()) || seen[v])
                throw ConfigError("permutation image is not a bijection");
            seen[v] = 1;
        }
    }

    static Permutation identity(int n) {
        std::vector<int> im(n);
        std::iota(im.begin(), im.end(), 0);
        return Permutation(std::move(im));
    }

    static Permutation transposition(int n, int i, int j) {
        Permutation p = identity(n);
        std::swap(p.image_[i], p.image_[j]);
        return p;
    }

    int size() const { return static_cast<int>(image_.size()); }
    int operator()(int i) const { return image_[i]; }
    const std::vector<int>& image() const { return image_; }

    Permutation inverse() const {
        std::vector<int> inv(image_.size());
        for (int i = 0; i < size(); ++i) inv[image_[i]] = i;
        return Permutation(std::move(inv));
    }

    /// Function composition: (a.after(b))(i) = a(b(i)).
    Permutation after(const Permutation& b) const {
        std::vector<int> im(image_.size());
        for (int i = 0; i < size(); ++i) im[i] = image_[b(i)];
        return Permutation(std::move(im));
    }

    bool is_identity() const {
        for (int i = 0; i < size(); ++i)
            if (image_[i] != i) return false;
        return true;
    }

    bool operator==(const Permutation& other) const { return image_ == other.image_; }
    bool operator<(const Permutation& other) const { return image_ < other.image_; }

    PointCloud apply(const PointCloud& q) const {
        if (q.n != size()) throw ConfigError("permutation size does not match cloud");
        PointCloud out(q.n, q.d);
        for (int i = 0; i < q.n; ++i) out.point(i) = q.point(image_[i]);
        return out;
    }

private:
    std::vector<int> image_;
};

// ---------------------------------------------------------------------------
// Group elements and finite actions
// ---------------------------------------------------------------------------

/// One orthogonal map on configuration space in permutation-block form:
/// (g . q)_i = R q_{sigma(i)} with R a d x d orthogonal point map.
/// Velocities transform the same way (the action is linear).
struct GroupElement {
    Permutation perm;
    Eigen::MatrixXd point_map; // d x d

    PointCloud apply(const PointCloud& q) const {
        if (q.n != perm.size() || q.d != point_map.rows())
            throw ConfigError("group element does not match cloud shape");
        PointCloud out(q.n, q.d);
        const bool trivial_map = point_map.isIdentity(0.0);
        for (int i = 0; i < q.n; ++i) {
            if (trivial_map)
                out.point(i) = q.point(perm(i));
            else
                out.point(i) = point_map * q.point(perm(i));
        }
        return out;
    }

    /// Apply to a flat nd velocity vector attached to some cloud.
    Eigen::VectorXd apply_flat(const Eigen::VectorXd& v) const {
        const int n = perm.size();
        const int d = static_cast<int>(point_map.rows());
        if (v.size() != static_cast<long>(n) * d)
            throw ConfigError("vector length does not match group element");
        Eigen::VectorXd out(v.size());
        const bool trivial_map = point_map.isIdentity(0.0);
        for (int i = 0; i < n; ++i) {
            if (trivial_map)
                out.segment(i * d, d) = v.segment(perm(i) * d, d);
            else
                out.segment(i * d, d).noalias() = point_map * v.segment(perm(i) * d, d);
        }
        return out;
    }

    /// Element whose action is `outer` composed after `inner`.
    static GroupElement composed(const GroupElement& outer, const GroupElement& inner) {
        return GroupElement{inner.perm.after(outer.perm), outer.point_map * inner.point_map};
    }

    GroupElement inverse() const {
        return GroupElement{perm.inverse(), point_map.transpose()};
    }

    bool is_identity(double tol = 1e-12) const {
        return perm.is_identity() && point_map.isIdentity(tol);
    }

    bool approx_equals(const GroupElement& other, double tol = 1e-12) const {
        return perm == other.perm && (point_map - other.point_map).lpNorm<Eigen::Infinity>() <= tol;
    }
};

/// Finite group acting linearly on clouds of n points in R^d. Element 0 is
/// the identity; closure under composition and inverses is verified at
/// construction. Element order is fixed, so group-averaged sums are
/// deterministic.
class FiniteGroupAction {
public:
    FiniteGroupAction(int n, int d, std::vector<GroupElement> elements)
        : n_(n), d_(d), elements_(std::move(elements)) {
        if (elements_.empty()) throw ConfigError("group action needs at least the identity");
        for (const auto& g : elements_) {
            if (g.perm.size() != n_ || g.point_map.rows() != d_ || g.point_map.cols() != d_)
                throw ConfigError("group element shape mismatch");
            if (!(g.point_map * g.point_map.transpose()).isIdentity(1e-10))
                throw ConfigError("point map is not orthogonal");
        }
        if (!elements_.front().is_identity())
            throw ConfigError("identity element must sit at index 0");
        verify_closure();
        cache_pure_swaps();
    }

    int n() const { return n_; }
    int d() const { return d_; }
    int size() const { return static_cast<int>(elements_.size()); }
    const GroupElement& element(int i) const { return elements_.at(i); }
    const std::vector<GroupElement>& elements() const { return elements_; }

    /// True when the transposition (i j) with trivial point map belongs to
    /// the group; exactly then do equivariant fields give bitwise-equal
    /// velocities to coincident points i and j.
    bool has_pure_swap(int i, int j) const { return pure_swap_[i * n_ + j]; }

    /// All n! point relabelings, point maps trivial. Elements enumerate in
    /// lexicographic image order, identity first.
    static FiniteGroupAction symmetric_group(int n, int d, int max_n = 6) {
        if (n > max_n)
            throw CapabilityError("symmetric group of degree " + std::to_string(n) +
                                  " exceeds the exact-enumeration limit " + std::to_string(max_n));
        std::vector<int> image(n);
        std::iota(image.begin(), image.end(), 0);
        std::vector<GroupElement> els;
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
        do {
            els.push_back(GroupElement{Permutation(image), eye});
        } while (std::next_permutation(image.begin(), image.end()));
        return FiniteGroupAction(n, d, std::move(els));
    }

    /// Z_2 acting by simultaneous reflection of one coordinate axis on every
    /// point; the fixed set is the hyperplane {x_axis = 0} copied n times.
    static FiniteGroupAction reflection_group(int n, int d, int axis) {
        if (axis < 0 || axis >= d) throw ConfigError("reflection axis out of range");
        Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d, d);
        r(axis, axis) = -1.0;
        std::vector<GroupElement> els;
        els.push_back(GroupElement{Permutation::identity(n), Eigen::MatrixXd::Identity(d, d)});
        els.push_back(GroupElement{Permutation::identity(n), r});
        return FiniteGroupAction(n, d, std::move(els));
    }

    /// All products g*h of two actions on the same space (direct product of
    /// commuting factors, e.g. permutations with a reflection).
    static FiniteGroupAction product(const FiniteGroupAction& a, const FiniteGroupAction& b) {
        if (a.n() != b.n() || a.d() != b.d())
            throw ConfigError("product factors act on different spaces");
        std::vector<GroupElement> els;
        for (const auto& ga : a.elements())
            for (const auto& gb : b.elements()) {
                GroupElement g = GroupElement::composed(ga, gb);
                bool dup = false;
                for (const auto& h : els)
                    if (h.approx_equals(g)) { dup = true; break; }
                if (!dup) els.push_back(std::move(g));
            }
        // keep the identity at index 0
        for (std::size_t i = 0; i < els.size(); ++i) {
            if (els[i].is_identity()) {
                std::swap(els[0], els[i]);
                break;
            }
        }
        return FiniteGroupAction(a.n(), a.d(), std::move(els));
    }

    /// Axes whose reflection (trivial permutation part) belongs to the group.
    std::vector<int> reflection_axes() const {
        std::vector<int> axes;
        for (int axis = 0; axis < d_; ++axis) {
            Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d_, d_);
            r(axis, axis) = -1.0;
            for (const auto& g : elements_) {
                if (g.perm.is_identity() && (g.point_map - r).lpNorm<Eigen::Infinity>() <= 1e-12) {
                    axes.push_back(axis);
                    break;
                }
            }
        }
        return axes;
    }

private:
    static std::string element_key(const GroupElement& g) {
        std::string key;
        key.reserve(16 * (g.perm.size() + g.point_map.size()));
        for (int v : g.perm.image()) key += std::to_string(v) + ",";
        for (long i = 0; i < g.point_map.size(); ++i)
            key += std::to_string(std::llround(g.point_map.data()[i] * 1e9)) + ",";
        return key;
    }

    void verify_closure() {
        std::map<std::string, int> index;
        for (int i = 0; i < size(); ++i) index[element_key(elements_[i])] = i;
        auto contains = [&](const GroupElement& g) {
            auto it = index.find(element_key(g));
            return it != index.end() && elements_[it->second].approx_equals(g, 1e-9);
        };
        for (const auto& g : elements_) {
            if (!contains(g.inverse())) throw ConfigError("group is not closed under inverses");
            for (const auto& h : elements_)
                if (!contains(GroupElement::composed(g, h)))
                    throw ConfigError("group is not closed under composition");
        }
    }

    void cache_pure_swaps() {
        pure_swap_.assign(static_cast<std::size_t>(n_) * n_, 0);
        for (const auto& g : elements_) {
            if (!g.point_map.isIdentity(1e-12)) continue;
            for (int i = 0; i < n_; ++i) {
                const int j = g.perm(i);
                if (j != i && g.perm(j) == i) {
                    // transposition-like on (i,j); require it to fix the rest
                    bool fixes_rest = true;
                    for (int k = 0; k < n_ && fixes_rest; ++k)
                        if (k != i && k != j && g.perm(k) != k) fixes_rest = false;
                    if (fixes_rest) {
                        pure_swap_[i * n_ + j] = 1;
                        pure_swap_[j * n_ + i] = 1;
                    }
                }
            }
        }
    }

    int n_;
    int d_;
    std::vector<GroupElement> elements_;
    std::vector<char> pure_swap_;
};

/// g . q for the element at `index`.
inline PointCloud apply_group_element(const FiniteGroupAction& action, int index,
                                      const PointCloud& q) {
    if (index < 0 || index >= action.size()) throw ConfigError("group element index out of range");
    if (q.n != action.n() || q.d != action.d())
        throw ConfigError("cloud shape does not match group action");
    return action.element(index).apply(q);
}

// ---------------------------------------------------------------------------
// Strata
// ---------------------------------------------------------------------------

/// Coincidence pattern of a configuration: the partition of point indices
/// into blocks of equal points (or of eigenvalue indices into multiplicity
/// packets). Blocks are sorted internally and ordered by smallest element,
/// so equal signatures compare bit-exactly.
struct StratumSignature {
    std::vector<std::vector<int>> blocks;
    std::vector<int> size_multiset; // block sizes, ascending

    /// Block sizes in block order; for sorted spectra these are the ordered
    /// multiplicities (m_1,...,m_{n(S)}).
    std::vector<int> block_sizes() const {
        std::vector<int> sizes;
        sizes.reserve(blocks.size());
        for (const auto& b : blocks) sizes.push_back(static_cast<int>(b.size()));
        return sizes;
    }

    int point_count() const {
        int c = 0;
        for (const auto& b : blocks) c += static_cast<int>(b.size());
        return c;
    }

    bool operator==(const StratumSignature& other) const { return blocks == other.blocks; }

    /// e.g. "[2,1] blocks={0,1},{2}"
    std::string to_string() const {
        std::ostringstream os;
        os << "[";
        const auto sizes = block_sizes();
        for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? "," : "") << sizes[i];
        os << "] blocks=";
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            os << (b ? ",{" : "{");
            for (std::size_t i = 0; i < blocks[b].size(); ++i)
                os << (i ? "," : "") << blocks[b][i];
            os << "}";
        }
        return os.str();
    }
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    int find(int i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }
    void unite(int i, int j) { parent_[find(i)] = find(j); }

private:
    std::vector<int> parent_;
};

inline StratumSignature signature_from_roots(UnionFind& uf, int n) {
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
    StratumSignature sig;
    for (auto& [root, members] : groups) {
        std::sort(members.begin(), members.end());
        sig.blocks.push_back(members);
    }
    std::sort(sig.blocks.begin(), sig.blocks.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    sig.size_multiset = sig.block_sizes();
    std::sort(sig.size_multiset.begin(), sig.size_multiset.end());
    return sig;
}

} // namespace detail

/// Coincidence partition of q under the transitive closure of the relation
/// |x_i - x_j| <= tol. tol = 0 groups exactly equal points.
inline StratumSignature stratum_signature(const PointCloud& q, double tol = 0.0) {
    if (tol < 0.0) throw ConfigError("tolerance must be nonnegative");
    detail::UnionFind uf(q.n);
    for (int i = 0; i < q.n; ++i)
        for (int j = i + 1; j < q.n; ++j)
            if ((q.point(i) - q.point(j)).norm() <= tol) uf.unite(i, j);
    return detail::signature_from_roots(uf, q.n);
}

/// Ordered multiplicities of a spectrum: eigenvalues sorted ascending, then
/// grouped by the transitive closure of |l_i - l_j| <= tol. The returned
/// blocks index the *sorted* sequence, so block_sizes() is the ordered
/// multiplicity tuple.
inline StratumSignature spectrum_signature(std::vector<double> eigenvalues, double tol = 0.0) {
    if (tol < 0.0) throw ConfigError("tolerance must be nonnegative");
    if (eigenvalues.empty()) throw ConfigError("spectrum must contain at least one eigenvalue");
    std::sort(eigenvalues.begin(), eigenvalues.end());
    const int n = static_cast<int>(eigenvalues.size());
    detail::UnionFind uf(n);
    for (int i = 0; i + 1 < n; ++i)
        if (eigenvalues[i + 1] - eigenvalues[i] <= tol) uf.unite(i, i + 1);
    return detail::signature_from_roots(uf, n);
}

/// Permutation sigma matching the coincidence structure of `a` onto `b`
/// (x_i = x_j iff y_{sigma(i)} = y_{sigma(j)}), or nullopt when the sorted
/// block-size multisets differ. Blocks of equal size are matched in
/// canonical (smallest-element) order.
inline std::optional<Permutation> same_stratum(const PointCloud& a, const PointCloud& b,
                                               double tol = 0.0) {
    a.require_same_shape(b);
    const StratumSignature sa = stratum_signature(a, tol);
    const StratumSignature sb = stratum_signature(b, tol);
    if (sa.size_multiset != sb.size_multiset) return std::nullopt;

    std::map<int, std::vector<int>> a_by_size, b_by_size;
    for (std::size_t i = 0; i < sa.blocks.size(); ++i)
        a_by_size[static_cast<int>(sa.blocks[i].size())].push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < sb.blocks.size(); ++i)
        b_by_size[static_cast<int>(sb.blocks[i].size())].push_back(static_cast<int>(i));

    std::vector<int> image(a.n, -1);
    for (const auto& [size, a_blocks] : a_by_size) {
        const auto& b_blocks = b_by_size.at(size);
        for (std::size_t k = 0; k < a_blocks.size(); ++k) {
            const auto& ba = sa.blocks[a_blocks[k]];
            const auto& bb = sb.blocks[b_blocks[k]];
            for (std::size_t t = 0; t < ba.size(); ++t) image[ba[t]] = bb[t];
        }
    }
    return Permutation(image);
}

/// Per-point side of the reflection hyperplane {x_axis = 0}: -1, 0, +1.
inline std::vector<int> reflection_sides(const PointCloud& q, int axis, double tol = 0.0) {
    std::vector<int> sides(q.n);
    for (int i = 0; i < q.n; ++i) {
        const double v = q.point(i)[axis];
        sides[i] = (v > tol) ? 1 : (v < -tol ? -1 : 0);
    }
    return sides;
}

/// Stratum test refined by a concrete action: coincidence blocks must match
/// under some permutation that also preserves the side pattern of every
/// reflection hyperplane of the action. This is the connected-component
/// refinement needed when the group contains reflections (equivariant flows
/// cannot carry a point across a fixed wall).
inline std::optional<Permutation> same_stratum_for_action(const FiniteGroupAction& action,
                                                          const PointCloud& a, const PointCloud& b,
                                                          double tol = 0.0) {
    auto sigma = same_stratum(a, b, tol);
    if (!sigma) return std::nullopt;
    const auto axes = action.reflection_axes();
    if (axes.empty()) return sigma;
    // Match blocks of equal size with equal side patterns instead.
    const StratumSignature sa = stratum_signature(a, tol);
    const StratumSignature sb = stratum_signature(b, tol);
    auto key_of = [&](const PointCloud& q, const std::vector<int>& block) {
        std::vector<int> key{static_cast<int>(block.size())};
        for (int axis : axes) key.push_back(reflection_sides(q, axis, tol)[block.front()]);
        return key;
    };
    std::map<std::vector<int>, std::vector<int>> a_groups, b_groups;
    for (std::size_t i = 0; i < sa.blocks.size(); ++i)
        a_groups[key_of(a, sa.blocks[i])].push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < sb.blocks.size(); ++i)
        b_groups[key_of(b, sb.blocks[i])].push_back(static_cast<int>(i));
    if (a_groups.size() != b_groups.size()) return std::nullopt;
    std::vector<int> image(a.n, -1);
    for (const auto& [key, a_blocks] : a_groups) {
        auto it = b_groups.find(key);
        if (it == b_groups.end() || it->second.size() != a_blocks.size()) return std::nullopt;
        for (std::size_t k = 0; k < a_blocks.size(); ++k) {
            const auto& ba = sa.blocks[a_blocks[k]];
            const auto& bb = sb.blocks[it->second[k]];
            for (std::size_t t = 0; t < ba.size(); ++t) image[ba[t]] = bb[t];
        }
    }
    return Permutation(image);
}

// ---------------------------------------------------------------------------
// Orbit distance
// ---------------------------------------------------------------------------

/// Distance between the permutation orbits of two clouds: the root of the
/// minimal sum of squared point distances over all relabelings, computed by
/// exact optimal assignment.
inline double orbit_distance(const PointCloud& a, const PointCloud& b,
                             int exact_assignment_limit = 10) {
    a.require_same_shape(b);
    if (a.n > exact_assignment_limit)
        throw CapabilityError("orbit_distance limited to n <= " +
                              std::to_string(exact_assignment_limit) + " points (got " +
                              std::to_string(a.n) + ")");
    Eigen::MatrixXd cost(a.n, a.n);
    for (int i = 0; i < a.n; ++i)
        for (int j = 0; j < a.n; ++j) cost(i, j) = (a.point(i) - b.point(j)).squaredNorm();
    const AssignmentResult res = solve_assignment(cost);
    return std::sqrt(std::max(0.0, res.cost));
}

} // namespace strataflow
