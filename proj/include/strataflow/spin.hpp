#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "strataflow/errors.hpp"

namespace strataflow {
namespace spin {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

inline constexpr int kMaxQubits = 10; // dense 2^n limit

enum class Pauli { I, X, Y, Z };

inline ComplexMatrix pauli_matrix(Pauli p) {
    ComplexMatrix m(2, 2);
    switch (p) {
        case Pauli::I: m << 1, 0, 0, 1; break;
        case Pauli::X: m << 0, 1, 1, 0; break;
        case Pauli::Y: m << 0, Complex(0, 1), Complex(0, -1), 0; break;
        case Pauli::Z: m << 1, 0, 0, -1; break;
    }
    return m;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Tensor product of single-site Paulis in the given order; site 0 is the
/// leftmost (most significant) factor.
inline ComplexMatrix pauli_string(const std::vector<Pauli>& letters) {
    const int n = static_cast<int>(letters.size());
    if (n < 1) throw ConfigError("pauli string needs at least one site");
    if (n > kMaxQubits)
        throw CapabilityError("dense matrices limited to " + std::to_string(kMaxQubits) +
                              " qubits (got " + std::to_string(n) + ")");
    ComplexMatrix out = pauli_matrix(letters[0]);
    for (int i = 1; i < n; ++i) out = kron(out, pauli_matrix(letters[i]));
    return out;
}

inline bool is_hermitian(const ComplexMatrix& m, double tol = 1e-12) {
    return (m - m.adjoint()).norm() <= tol * std::max(1.0, m.norm());
}

enum class HamiltonianKind { zz, xyz, collective_x, collective_z };

inline HamiltonianKind hamiltonian_kind_from_string(const std::string& s) {
    if (s == "zz") return HamiltonianKind::zz;
    if (s == "xyz") return HamiltonianKind::xyz;
    if (s == "collective_x") return HamiltonianKind::collective_x;
    if (s == "collective_z") return HamiltonianKind::collective_z;
    throw ConfigError("unknown hamiltonian kind '" + s + "'");
}

/// Permutation-invariant spin-network Hamiltonians:
///   zz           sum over pairs k<m of Z_k Z_m
///   xyz          sum over ordered distinct triples (i,j,k) of X_i Y_j Z_k
///   collective_x sum over sites of X_k       (likewise collective_z)
inline ComplexMatrix symmetric_hamiltonian(HamiltonianKind kind, int n) {
    if (n < 1) throw ConfigError("need at least one spin");
    if (n > kMaxQubits)
        throw CapabilityError("dense matrices limited to " + std::to_string(kMaxQubits) +
                              " qubits (got " + std::to_string(n) + ")");
    if ((kind == HamiltonianKind::zz || kind == HamiltonianKind::xyz) && n < 2)
        throw ConfigError("pairwise hamiltonians need n >= 2");
    const long dim = 1L << n;
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    std::vector<Pauli> letters(n, Pauli::I);
    switch (kind) {
        case HamiltonianKind::zz:
            for (int k = 0; k < n; ++k)
                for (int m = k + 1; m < n; ++m) {
                    std::fill(letters.begin(), letters.end(), Pauli::I);
                    letters[k] = Pauli::Z;
                    letters[m] = Pauli::Z;
                    h += pauli_string(letters);
                }
            break;
        case HamiltonianKind::xyz:
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        if (i == j || j == k || i == k) continue;
                        std::fill(letters.begin(), letters.end(), Pauli::I);
                        letters[i] = Pauli::X;
                        letters[j] = Pauli::Y;
                        letters[k] = Pauli::Z;
                        h += pauli_string(letters);
                    }
            break;
        case HamiltonianKind::collective_x:
        case HamiltonianKind::collective_z:
            for (int k = 0; k < n; ++k) {
                std::fill(letters.begin(), letters.end(), Pauli::I);
                letters[k] = kind == HamiltonianKind::collective_x ? Pauli::X : Pauli::Z;
                h += pauli_string(letters);
            }
            break;
    }
    return h;
}

/// Unitary permuting the qubits: maps the basis state with bits
/// (b_0,...,b_{n-1}) to the state with bit sigma(i) at site i.
inline ComplexMatrix qubit_permutation_unitary(const std::vector<int>& sigma) {
    const int n = static_cast<int>(sigma.size());
    const long dim = 1L << n;
    ComplexMatrix u = ComplexMatrix::Zero(dim, dim);
    for (long b = 0; b < dim; ++b) {
        long nb = 0;
        for (int i = 0; i < n; ++i) {
            const long bit = (b >> (n - 1 - sigma[i])) & 1L;
            nb |= bit << (n - 1 - i);
        }
        u(nb, b) = 1.0;
    }
    return u;
}

/// P = (1/n!) sum over qubit permutations; Hermitian idempotent with trace
/// n+1 (the dimension of the symmetric sector).
inline ComplexMatrix symmetric_sector_projector(int n) {
    if (n < 1) throw ConfigError("need at least one spin");
    if (n > kMaxQubits)
        throw CapabilityError("dense matrices limited to " + std::to_string(kMaxQubits) +
                              " qubits (got " + std::to_string(n) + ")");
    std::vector<int> sigma(n);
    for (int i = 0; i < n; ++i) sigma[i] = i;
    const long dim = 1L << n;
    ComplexMatrix p = ComplexMatrix::Zero(dim, dim);
    long count = 0;
    do {
        p += qubit_permutation_unitary(sigma);
        ++count;
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return p / static_cast<double>(count);
}

/// Orthonormal basis of the permutation-symmetric sector: column w is the
/// normalized sum of all computational states of Hamming weight w.
inline ComplexMatrix dicke_basis(int n) {
    const long dim = 1L << n;
    ComplexMatrix b = ComplexMatrix::Zero(dim, n + 1);
    std::vector<long> counts(n + 1, 0);
    for (long s = 0; s < dim; ++s) ++counts[std::popcount(static_cast<unsigned long>(s))];
    for (long s = 0; s < dim; ++s) {
        const int w = std::popcount(static_cast<unsigned long>(s));
        b(s, w) = 1.0 / std::sqrt(static_cast<double>(counts[w]));
    }
    return b;
}

/// Compress a Hamiltonian to the symmetric sector: B^dag H B.
inline ComplexMatrix sector_compress(const ComplexMatrix& h, const ComplexMatrix& basis) {
    return basis.adjoint() * h * basis;
}

// ---------------------------------------------------------------------------
// Dynamical Lie algebra closure
// ---------------------------------------------------------------------------

struct LieClosureReport {
    int dimension = 0;
    std::vector<ComplexMatrix> basis; // Frobenius-orthonormal antihermitian matrices
    long iterations = 0;              // commutators evaluated
    bool converged = false;
};

namespace detail {

/// Frobenius inner product restricted to the real vector space of
/// antihermitian matrices (it is real there).
inline double ah_dot(const ComplexMatrix& a, const ComplexMatrix& b) {
    return (a.adjoint() * b).trace().real();
}

/// Two-pass modified Gram-Schmidt; returns the residual norm and leaves the
/// orthogonalized matrix in `m`.
inline double project_out(const std::vector<ComplexMatrix>& basis, ComplexMatrix& m) {
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) m -= ah_dot(b, m) * b;
    return m.norm();
}

} // namespace detail

/// Closure of the antihermitian span of {i H_j} under commutators: commute
/// pending basis pairs, append new directions, stop when closed or when
/// max_dim is hit (converged = false).
inline LieClosureReport lie_closure(const std::vector<ComplexMatrix>& generators, int max_dim,
                                    double tol = 1e-10) {
    if (generators.empty()) throw ConfigError("lie closure needs at least one generator");
    if (max_dim < 1) throw ConfigError("max_dim must be at least 1");
    const long dim = generators.front().rows();
    for (const auto& g : generators) {
        if (g.rows() != dim || g.cols() != dim)
            throw ConfigError("generators must share a square shape");
        if (!is_hermitian(g)) throw ConfigError("lie closure generators must be Hermitian");
    }

    LieClosureReport report;
    const Complex iunit(0.0, 1.0);
    for (const auto& g : generators) {
        ComplexMatrix a = iunit * g;
        const double res = detail::project_out(report.basis, a);
        if (res > tol) report.basis.push_back(a / res);
    }

    // Pairs (i, j) with i < j are processed in deterministic order as the
    // basis grows; `done` marks how many leading pairs are finished.
    std::size_t next_i = 0, next_j = 1;
    while (true) {
        if (next_j >= report.basis.size()) break; // all pairs processed: closed
        ComplexMatrix c = report.basis[next_i] * report.basis[next_j] -
                          report.basis[next_j] * report.basis[next_i];
        ++report.iterations;
        const double res = detail::project_out(report.basis, c);
        if (res > tol) {
            if (static_cast<int>(report.basis.size()) + 1 > max_dim) {
                report.dimension = static_cast<int>(report.basis.size());
                report.converged = false;
                return report;
            }
            report.basis.push_back(c / res);
        }
        ++next_i;
        if (next_i == next_j) {
            next_i = 0;
            ++next_j;
        }
    }
    report.dimension = static_cast<int>(report.basis.size());
    report.converged = true;
    return report;
}

/// Largest residual of any pairwise basis commutator outside the span; a
/// closed report keeps this at rounding level.
inline double closure_residual(const LieClosureReport& report) {
    double worst = 0.0;
    for (std::size_t i = 0; i < report.basis.size(); ++i)
        for (std::size_t j = i + 1; j < report.basis.size(); ++j) {
            ComplexMatrix c = report.basis[i] * report.basis[j] -
                              report.basis[j] * report.basis[i];
            for (const auto& b : report.basis) c -= detail::ah_dot(b, c) * b;
            worst = std::max(worst, c.norm());
        }
    return worst;
}

} // namespace spin
} // namespace strataflow
