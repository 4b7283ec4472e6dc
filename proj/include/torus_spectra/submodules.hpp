#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <vector>

namespace torus_spectra {

namespace mp = boost::multiprecision;
using BigInt = mp::cpp_int;
using BigRat = mp::cpp_rational;
using BigMat = std::vector<std::vector<BigInt>>;

namespace detail {

inline BigMat to_big(const std::vector<IntVec>& rows, int cols) {
    BigMat m(rows.size(), std::vector<BigInt>(static_cast<std::size_t>(cols)));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < cols; ++j) m[i][j] = rows[i][j];
    return m;
}

inline IntVec to_long(const std::vector<BigInt>& row) {
    IntVec r(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) r[j] = row[j].convert_to<long>();
    return r;
}

inline BigInt floor_div(const BigInt& a, const BigInt& b) {
    BigInt q = a / b;  // truncates toward zero
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Row-style Hermite normal form. Returns the echelon matrix E and unimodular U with U*A = E.
// Nonzero rows of E come first, pivots positive, entries above pivots reduced into [0, pivot).
inline std::pair<BigMat, BigMat> echelon(BigMat A, std::size_t cols) {
    const std::size_t n = A.size();
    BigMat U(n, std::vector<BigInt>(n, 0));
    for (std::size_t i = 0; i < n; ++i) U[i][i] = 1;
    auto axpy = [](std::vector<BigInt>& dst, const std::vector<BigInt>& src, const BigInt& q) {
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= q * src[j];
    };
    std::size_t r = 0;
    std::vector<std::size_t> pivot_cols;
    for (std::size_t c = 0; c < cols && r < n; ++c) {
        while (true) {
            std::size_t best = n;
            for (std::size_t i = r; i < n; ++i)
                if (A[i][c] != 0 && (best == n || abs(A[i][c]) < abs(A[best][c]))) best = i;
            if (best == n) break;
            std::swap(A[r], A[best]);
            std::swap(U[r], U[best]);
            bool done = true;
            for (std::size_t i = r + 1; i < n; ++i) {
                if (A[i][c] == 0) continue;
                const BigInt q = A[i][c] / A[r][c];
                axpy(A[i], A[r], q);
                axpy(U[i], U[r], q);
                if (A[i][c] != 0) done = false;
            }
            if (done) break;
        }
        if (r < n && A[r][c] != 0) {
            if (A[r][c] < 0) {
                for (auto& x : A[r]) x = -x;
                for (auto& x : U[r]) x = -x;
            }
            for (std::size_t i = 0; i < r; ++i) {
                const BigInt q = floor_div(A[i][c], A[r][c]);
                if (q != 0) {
                    axpy(A[i], A[r], q);
                    axpy(U[i], U[r], q);
                }
            }
            pivot_cols.push_back(c);
            ++r;
        }
    }
    return {A, U};
}

inline bool row_is_zero(const std::vector<BigInt>& row) {
    for (const auto& x : row)
        if (x != 0) return false;
    return true;
}

inline std::vector<IntVec> nonzero_rows(const BigMat& E) {
    std::vector<IntVec> out;
    for (const auto& row : E)
        if (!row_is_zero(row)) out.push_back(to_long(row));
    return out;
}

inline BigMat transpose(const BigMat& A, std::size_t cols) {
    BigMat T(cols, std::vector<BigInt>(A.size()));
    for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) T[j][i] = A[i][j];
    return T;
}

// Basis (as rows) of the integer kernel {x in Z^d : A x = 0}.
inline std::vector<IntVec> integer_kernel(const std::vector<IntVec>& rows, int d) {
    if (rows.empty()) {
        std::vector<IntVec> id;
        for (int i = 0; i < d; ++i) {
            IntVec e(d, 0);
            e[i] = 1;
            id.push_back(e);
        }
        return id;
    }
    const auto At = transpose(to_big(rows, d), static_cast<std::size_t>(d));
    auto [E, U] = echelon(At, rows.size());
    std::vector<IntVec> ker;
    for (std::size_t i = 0; i < E.size(); ++i)
        if (row_is_zero(E[i])) ker.push_back(to_long(U[i]));
    return ker;
}

inline std::vector<std::vector<BigRat>> rational_inverse(const std::vector<IntVec>& rows) {
    const std::size_t n = rows.size();
    std::vector<std::vector<BigRat>> a(n, std::vector<BigRat>(2 * n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a[i][j] = BigRat(rows[i][j]);
        a[i][n + i] = 1;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        while (p < n && a[p][c] == 0) ++p;
        if (p == n) throw DependentVectors("singular integer matrix");
        std::swap(a[p], a[c]);
        const BigRat piv = a[c][c];
        for (auto& x : a[c]) x /= piv;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == c || a[i][c] == 0) continue;
            const BigRat f = a[i][c];
            for (std::size_t j = 0; j < 2 * n; ++j) a[i][j] -= f * a[c][j];
        }
    }
    std::vector<std::vector<BigRat>> inv(n, std::vector<BigRat>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) inv[i][j] = a[i][n + j];
    return inv;
}

inline BigRat rational_det(const std::vector<IntVec>& rows) {
    const std::size_t n = rows.size();
    std::vector<std::vector<BigRat>> a(n, std::vector<BigRat>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i][j] = BigRat(rows[i][j]);
    BigRat det = 1;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        while (p < n && a[p][c] == 0) ++p;
        if (p == n) return 0;
        if (p != c) {
            std::swap(a[p], a[c]);
            det = -det;
        }
        det *= a[c][c];
        for (std::size_t i = c + 1; i < n; ++i) {
            if (a[i][c] == 0) continue;
            const BigRat f = a[i][c] / a[c][c];
            for (std::size_t j = c; j < n; ++j) a[i][j] -= f * a[c][j];
        }
    }
    return det;
}

inline BigInt rat_floor(const BigRat& x) {
    return floor_div(mp::numerator(x), mp::denominator(x));
}

}  // namespace detail

inline std::vector<IntVec> hermite_basis(const std::vector<IntVec>& gens, int d) {
    if (gens.empty()) return {};
    return detail::nonzero_rows(detail::echelon(detail::to_big(gens, d), static_cast<std::size_t>(d)).first);
}

inline long determinant(const std::vector<IntVec>& rows) {
    const BigRat det = detail::rational_det(rows);
    return mp::numerator(det).convert_to<long>();
}

// Saturated submodule of Z^d with canonical Hermite basis and a unimodular completion.
class Submodule {
public:
    Submodule() = default;

    // basis must already be the canonical Hermite basis of a saturated module
    static Submodule from_hermite(std::vector<IntVec> basis, int d) {
        Submodule M;
        M.d_ = d;
        M.basis_ = std::move(basis);
        M.complete();
        return M;
    }

    static Submodule zero(int d) { return from_hermite({}, d); }
    static Submodule full(int d) {
        std::vector<IntVec> id;
        for (int i = 0; i < d; ++i) {
            IntVec e(d, 0);
            e[i] = 1;
            id.push_back(e);
        }
        return from_hermite(id, d);
    }

    int dim() const { return d_; }
    int rank() const { return static_cast<int>(basis_.size()); }
    const std::vector<IntVec>& basis() const { return basis_; }
    const std::vector<IntVec>& completion() const { return completion_; }

    // [basis; completion], unimodular with determinant +1
    std::vector<IntVec> adapted() const {
        auto all = basis_;
        all.insert(all.end(), completion_.begin(), completion_.end());
        return all;
    }

    // integer coordinates of xi in the adapted basis
    IntVec coordinates(const IntVec& xi) const {
        IntVec c(d_, 0);
        for (int a = 0; a < d_; ++a) {
            long s = 0;
            for (int j = 0; j < d_; ++j) s += xi[j] * inverse_[j][a];
            c[a] = s;
        }
        return c;
    }

    IntVec from_coordinates(const IntVec& c) const {
        IntVec xi(d_, 0);
        const auto all = adapted();
        for (int a = 0; a < d_; ++a)
            for (int j = 0; j < d_; ++j) xi[j] += c[a] * all[a][j];
        return xi;
    }

    bool contains(const IntVec& xi) const {
        const IntVec c = coordinates(xi);
        for (int a = rank(); a < d_; ++a)
            if (c[a] != 0) return false;
        return true;
    }

    bool is_subset_of(const Submodule& other) const {
        for (const auto& v : basis_)
            if (!other.contains(v)) return false;
        return true;
    }

    // the representative of xi + M lying in the span of the completion
    IntVec beta(const IntVec& xi) const {
        IntVec c = coordinates(xi);
        for (int a = 0; a < rank(); ++a) c[a] = 0;
        return from_coordinates(c);
    }

    // coordinates of an element of M in the basis of M
    IntVec module_coordinates(const IntVec& m) const {
        IntVec c = coordinates(m);
        c.resize(static_cast<std::size_t>(rank()));
        return c;
    }

    IntVec from_module_coordinates(const IntVec& n) const {
        IntVec xi(d_, 0);
        for (int a = 0; a < rank(); ++a)
            for (int j = 0; j < d_; ++j) xi[j] += n[a] * basis_[a][j];
        return xi;
    }

    bool operator==(const Submodule& o) const { return d_ == o.d_ && basis_ == o.basis_; }
    bool operator!=(const Submodule& o) const { return !(*this == o); }
    bool operator<(const Submodule& o) const {
        if (rank() != o.rank()) return rank() < o.rank();
        return basis_ < o.basis_;
    }

    std::size_t hash() const {
        IntVec flat;
        flat.push_back(d_);
        for (const auto& v : basis_) flat.insert(flat.end(), v.begin(), v.end());
        return IntVecHash{}(flat);
    }

private:
    void complete() {
        const int r = rank();
        completion_.clear();
        if (r == d_) {
            // nothing to add
        } else if (r == 0) {
            for (int i = 0; i < d_; ++i) {
                IntVec e(d_, 0);
                e[i] = 1;
                completion_.push_back(e);
            }
        } else {
            // U B^T = [H; 0]  =>  B U^T = [H^T | 0]; rows of (U^{-1})^T past r complete the basis
            const auto Bt = detail::transpose(detail::to_big(basis_, d_), static_cast<std::size_t>(d_));
            auto [E, U] = detail::echelon(Bt, static_cast<std::size_t>(r));
            std::vector<IntVec> Urows;
            for (const auto& row : U) Urows.push_back(detail::to_long(row));
            const auto Uinv = detail::rational_inverse(Urows);
            for (int a = r; a < d_; ++a) {
                IntVec row(d_);
                for (int j = 0; j < d_; ++j) row[j] = mp::numerator(Uinv[j][a]).convert_to<long>();
                completion_.push_back(row);
            }
        }
        if (r < d_) {
            auto all = adapted();
            const BigRat det = detail::rational_det(all);
            if (det != 1 && det != -1) throw NotSaturated("submodule is not saturated");
            if (det == -1) completion_.back() = neg(completion_.back());
            reduce_completion();
        }
        const auto all = adapted();
        const auto inv = detail::rational_inverse(all);
        inverse_.assign(static_cast<std::size_t>(d_), IntVec(static_cast<std::size_t>(d_), 0));
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j) {
                if (mp::denominator(inv[i][j]) != 1) throw NotSaturated("adapted basis is not unimodular");
                inverse_[i][j] = mp::numerator(inv[i][j]).convert_to<long>();
            }
    }

    // shift each completion vector by M so its least-squares coefficients on M lie in [0,1)
    void reduce_completion() {
        const int r = rank();
        if (r == 0) return;
        std::vector<std::vector<BigRat>> gram(r, std::vector<BigRat>(r));
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b) {
                BigInt s = 0;
                for (int j = 0; j < d_; ++j) s += BigInt(basis_[a][j]) * basis_[b][j];
                gram[a][b] = BigRat(s);
            }
        for (auto& c : completion_) {
            std::vector<BigRat> rhs(r);
            for (int a = 0; a < r; ++a) {
                BigInt s = 0;
                for (int j = 0; j < d_; ++j) s += BigInt(basis_[a][j]) * c[j];
                rhs[a] = BigRat(s);
            }
            auto A = gram;
            for (int col = 0; col < r; ++col) {
                int p = col;
                while (A[p][col] == 0) ++p;
                std::swap(A[p], A[col]);
                std::swap(rhs[p], rhs[col]);
                for (int i = 0; i < r; ++i) {
                    if (i == col || A[i][col] == 0) continue;
                    const BigRat f = A[i][col] / A[col][col];
                    for (int j = col; j < r; ++j) A[i][j] -= f * A[col][j];
                    rhs[i] -= f * rhs[col];
                }
            }
            for (int a = 0; a < r; ++a) {
                const long fl = detail::rat_floor(rhs[a] / A[a][a]).convert_to<long>();
                for (int j = 0; j < d_; ++j) c[j] -= fl * basis_[a][j];
            }
        }
    }

    int d_ = 0;
    std::vector<IntVec> basis_;
    std::vector<IntVec> completion_;
    std::vector<IntVec> inverse_;  // inverse of the adapted matrix
};

struct SubmoduleHash {
    std::size_t operator()(const Submodule& m) const noexcept { return m.hash(); }
};

inline Submodule saturate(const std::vector<IntVec>& gens, int d) {
    auto B = hermite_basis(gens, d);
    if (B.empty()) return Submodule::zero(d);
    if (static_cast<int>(B.size()) == d) return Submodule::full(d);
    const auto K = detail::integer_kernel(B, d);
    const auto S = detail::integer_kernel(K, d);
    return Submodule::from_hermite(hermite_basis(S, d), d);
}

// Unimodular completion of a saturated module given by any basis.
inline std::vector<IntVec> adapted_basis(const std::vector<IntVec>& basis, int d) {
    const auto H = hermite_basis(basis, d);
    const Submodule M = saturate(basis, d);
    if (H != M.basis()) throw NotSaturated("adapted_basis: module is not saturated");
    return M.completion();
}

// rank of the integer vectors over R
inline int rank_of(const std::vector<IntVec>& vs, int d) { return static_cast<int>(hermite_basis(vs, d).size()); }

struct Projection {
    Eigen::VectorXd along;       // w_M
    Eigen::VectorXd orthogonal;  // w_{M perp}
    Eigen::VectorXd coeffs;      // w_M in the basis of M
};

inline Projection project(const Lattice& L, const Eigen::VectorXd& w, const Submodule& M) {
    Projection p;
    const int r = M.rank();
    if (r == 0) {
        p.along = Eigen::VectorXd::Zero(L.d);
        p.orthogonal = w;
        p.coeffs = Eigen::VectorXd();
        return p;
    }
    Eigen::MatrixXd V(r, L.d);
    for (int a = 0; a < r; ++a) V.row(a) = to_real(M.basis()[a]).transpose();
    const Eigen::MatrixXd GM = V * L.g_star * V.transpose();
    p.coeffs = GM.ldlt().solve(V * (L.g_star * w));
    p.along = V.transpose() * p.coeffs;
    p.orthogonal = w - p.along;
    return p;
}

struct FloquetSplit {
    IntVec zeta;               // integer part of (xi+kappa)_M, an element of M
    Eigen::VectorXd kappa_prime;  // fractional part, in span M
    Eigen::VectorXd kappa_coords; // fractional coefficients in [0,1) on the basis of M
    IntVec xi_tilde;           // xi - zeta
    double ell2 = 0;           // |(xi+kappa)_{M perp}|^2
};

inline FloquetSplit floquet_split(const Lattice& L, const IntVec& xi, const Submodule& M) {
    const Eigen::VectorXd w = L.shifted(xi);
    const Projection p = project(L, w, M);
    FloquetSplit f;
    const int r = M.rank();
    IntVec n(static_cast<std::size_t>(r));
    f.kappa_coords = Eigen::VectorXd(r);
    for (int a = 0; a < r; ++a) {
        double c = p.coeffs[a];
        const double rc = std::round(c);
        if (std::abs(c - rc) <= 1e-9 * std::max(1.0, std::abs(c))) c = rc;
        const double fl = std::floor(c);
        n[a] = static_cast<long>(fl);
        f.kappa_coords[a] = c - fl;
    }
    f.zeta = M.from_module_coordinates(n);
    f.kappa_prime = Eigen::VectorXd::Zero(L.d);
    for (int a = 0; a < r; ++a) f.kappa_prime += f.kappa_coords[a] * to_real(M.basis()[a]);
    f.xi_tilde = sub(xi, f.zeta);
    f.ell2 = L.norm2(p.orthogonal);
    return f;
}

}  // namespace torus_spectra
