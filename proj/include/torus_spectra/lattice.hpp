#pragma once

#include "errors.hpp"
#include "types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace torus_spectra {

// Flat torus R^d / Gamma. Points of Z^d are covectors in the dual basis;
// their length uses the inverse metric g*.
struct Lattice {
    int d = 0;
    Eigen::MatrixXd basis;   // rows e_A
    Eigen::MatrixXd g;       // e_A . e_B
    Eigen::MatrixXd g_star;  // g^{-1}
    Eigen::VectorXd kappa;
    double coercivity = 0;  // min |k|^2 over k != 0
    IntVec coercivity_witness;
    double min_volume_bound = 0;
    std::optional<double> min_volume_enumerated;

    double norm2(const Eigen::VectorXd& v) const { return v.dot(g_star * v); }
    double norm(const Eigen::VectorXd& v) const { return std::sqrt(std::max(0.0, norm2(v))); }
    double bracket(const Eigen::VectorXd& v) const { return std::sqrt(1.0 + norm2(v)); }
    double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(g_star * b); }

    double norm2(const IntVec& k) const { return norm2(to_real(k)); }
    double norm(const IntVec& k) const { return norm(to_real(k)); }

    Eigen::VectorXd shifted(const IntVec& xi) const { return to_real(xi) + kappa; }
    // free eigenvalue |xi + kappa|^2
    double free_eigenvalue(const IntVec& xi) const { return norm2(shifted(xi)); }

    double sqrt_det_g_star() const { return std::sqrt(g_star.determinant()); }
    double max_dual_basis_norm() const { return std::sqrt(g_star.diagonal().maxCoeff()); }
};

namespace detail {

// Calls f(k) for every k with |k_i| <= bound[i].
template <class F>
void for_each_in_box(const IntVec& lo, const IntVec& hi, F&& f) {
    const int d = static_cast<int>(lo.size());
    for (int i = 0; i < d; ++i)
        if (lo[i] > hi[i]) return;
    IntVec cur = lo;
    while (true) {
        f(cur);
        int i = d - 1;
        while (i >= 0 && cur[i] == hi[i]) {
            cur[i] = lo[i];
            --i;
        }
        if (i < 0) break;
        ++cur[i];
    }
}

inline double gram_volume(const Lattice& L, const std::vector<IntVec>& us) {
    const std::size_t s = us.size();
    if (s == 0) return 1.0;
    Eigen::MatrixXd G(s, s);
    for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) G(a, b) = L.dot(to_real(us[a]), to_real(us[b]));
    const double det = G.determinant();
    return det > 0 ? std::sqrt(det) : 0.0;
}

inline bool prefer_witness(const IntVec& a, const IntVec& b) {
    long la = 0, lb = 0;
    for (long x : a) la += std::labs(x);
    for (long x : b) lb += std::labs(x);
    if (la != lb) return la < lb;
    return a > b;
}

}  // namespace detail

inline std::pair<double, IntVec> coercivity_constant(const Lattice& L) {
    const int d = L.d;
    auto scan = [&](long r, double& best, IntVec& witness) {
        detail::for_each_in_box(IntVec(d, -r), IntVec(d, r), [&](const IntVec& k) {
            if (is_zero(k)) return;
            const double n2 = L.norm2(k);
            if (witness.empty()) {
                best = n2;
                witness = k;
                return;
            }
            const double tol = 1e-12 * std::max(1.0, best);
            if (n2 < best - tol || (std::abs(n2 - best) <= tol && detail::prefer_witness(k, witness))) {
                if (n2 < best - tol) best = n2;
                witness = k;
            }
        });
    };
    double best = std::numeric_limits<double>::infinity();
    IntVec witness;
    scan(2, best, witness);
    // beyond this sup-norm radius every k is longer than the current best
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L.g_star);
    const double lmin = es.eigenvalues().minCoeff();
    const long R = static_cast<long>(std::ceil(std::sqrt(best / lmin)));
    if (R > 2) scan(R, best, witness);
    return {best, witness};
}

inline double min_volume_bound(const Lattice& L) {
    const double c2 = L.max_dual_basis_norm();
    return L.sqrt_det_g_star() * std::min(1.0, std::pow(c2, -L.d));
}

// Minimum g*-volume over independent integer tuples of every size, searched on a small ball.
inline double min_volume_enumerated(const Lattice& L) {
    const int d = L.d;
    std::vector<IntVec> cand;
    detail::for_each_in_box(IntVec(d, -2), IntVec(d, 2), [&](const IntVec& k) {
        if (is_zero(k)) return;
        // one of k, -k suffices
        for (long x : k) {
            if (x == 0) continue;
            if (x > 0) cand.push_back(k);
            return;
        }
    });
    double best = std::numeric_limits<double>::infinity();
    const double tiny = 1e-9;
    for (std::size_t a = 0; a < cand.size(); ++a) {
        best = std::min(best, L.norm(cand[a]));
        if (d >= 2)
            for (std::size_t b = a + 1; b < cand.size(); ++b) {
                const double v2 = detail::gram_volume(L, {cand[a], cand[b]});
                if (v2 > tiny) best = std::min(best, v2);
                if (d >= 3)
                    for (std::size_t c = b + 1; c < cand.size(); ++c) {
                        const double v3 = detail::gram_volume(L, {cand[a], cand[b], cand[c]});
                        if (v3 > tiny) best = std::min(best, v3);
                    }
            }
    }
    return best;
}

inline Lattice finish_lattice(Lattice L) {
    const auto [c, w] = coercivity_constant(L);
    L.coercivity = c;
    L.coercivity_witness = w;
    L.min_volume_bound = min_volume_bound(L);
    if (L.d <= 3) L.min_volume_enumerated = min_volume_enumerated(L);
    return L;
}

inline Lattice build_lattice(const Eigen::MatrixXd& basis, const Eigen::VectorXd& kappa) {
    const int d = static_cast<int>(basis.rows());
    if (d < 1 || basis.cols() != d) throw DegenerateLattice("basis must be a square matrix");
    if (kappa.size() != d) throw DegenerateLattice("kappa dimension mismatch");
    const double scale = basis.rowwise().norm().prod();
    if (scale == 0 || std::abs(basis.determinant()) / scale <= 1e-10)
        throw DegenerateLattice("basis rows are linearly dependent");
    Lattice L;
    L.d = d;
    L.basis = basis;
    L.g = basis * basis.transpose();
    L.g_star = L.g.inverse();
    L.g_star = 0.5 * (L.g_star + L.g_star.transpose());
    L.kappa = kappa;
    return finish_lattice(std::move(L));
}

inline Lattice euclidean_lattice(int d, const Eigen::VectorXd& kappa) {
    return build_lattice(Eigen::MatrixXd::Identity(d, d), kappa);
}
inline Lattice euclidean_lattice(int d) { return euclidean_lattice(d, Eigen::VectorXd::Zero(d)); }

inline Lattice hexagonal_lattice(const Eigen::VectorXd& kappa = Eigen::VectorXd::Zero(2)) {
    Eigen::MatrixXd b(2, 2);
    b << 1.0, 0.0, 0.5, std::sqrt(3.0) / 2.0;
    return build_lattice(b, kappa);
}

// Lattice whose inverse metric is the given positive definite matrix.
inline Lattice lattice_from_dual_metric(const Eigen::MatrixXd& g_star, const Eigen::VectorXd& kappa) {
    Eigen::MatrixXd g = g_star.inverse();
    g = 0.5 * (g + g.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success) throw DegenerateLattice("dual metric is not positive definite");
    Lattice L;
    L.d = static_cast<int>(g.rows());
    L.basis = llt.matrixL();
    L.g = g;
    L.g_star = g_star;
    L.kappa = kappa;
    return finish_lattice(std::move(L));
}

// s N^{s-1} alpha / Vol(u_1..u_s): bound on |w| for w in span u with |<w,u_j>| <= alpha.
inline double volume_bound(const Lattice& L, const std::vector<IntVec>& us, double alpha, double N) {
    const double vol = detail::gram_volume(L, us);
    double scale = 1.0;
    for (const auto& u : us) scale *= std::max(L.norm(u), 1e-300);
    if (us.empty() || vol <= 1e-12 * scale) throw DependentVectors("volume_bound: vectors are dependent");
    const double s = static_cast<double>(us.size());
    return s * std::pow(N, s - 1.0) * alpha / vol;
}

// Points xi with |xi + kappa| <= R, lexicographic order.
inline IndexSet ball(const Lattice& L, double R) {
    const int d = L.d;
    IntVec lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
        // |(xi+kappa)_i| <= R |e_i|_g
        const double w = R * std::sqrt(L.g(i, i));
        lo[i] = static_cast<long>(std::floor(-w - L.kappa[i])) - 1;
        hi[i] = static_cast<long>(std::ceil(w - L.kappa[i])) + 1;
    }
    std::vector<IntVec> pts;
    const double R2 = R * R * (1.0 + 1e-14);
    detail::for_each_in_box(lo, hi, [&](const IntVec& xi) {
        if (L.free_eigenvalue(xi) <= R2) pts.push_back(xi);
    });
    return IndexSet(d, std::move(pts));
}

// Nonzero integer vectors sorted by length, grown on demand.
class ShortVectors {
public:
    explicit ShortVectors(const Lattice& L, double radius) : L_(&L) { build(radius); }

    double radius() const { return radius_; }
    const std::vector<IntVec>& vectors() const { return vecs_; }
    const std::vector<double>& norms() const { return norms_; }

    // f(k, |k|) for every k with |k| <= r; requires r <= radius().
    template <class F>
    void for_each_within(double r, F&& f) const {
        for (std::size_t i = 0; i < vecs_.size() && norms_[i] <= r; ++i) f(vecs_[i], norms_[i]);
    }

    void ensure(double r) {
        if (r > radius_) build(std::max(r, 1.5 * radius_));
    }

private:
    void build(double radius) {
        radius_ = radius;
        const Lattice& L = *L_;
        const int d = L.d;
        IntVec lo(d), hi(d);
        for (int i = 0; i < d; ++i) {
            const long w = static_cast<long>(std::ceil(radius * std::sqrt(L.g(i, i))));
            lo[i] = -w;
            hi[i] = w;
        }
        std::vector<std::pair<double, IntVec>> tmp;
        detail::for_each_in_box(lo, hi, [&](const IntVec& k) {
            if (is_zero(k)) return;
            const double n = L.norm(k);
            if (n <= radius) tmp.emplace_back(n, k);
        });
        std::sort(tmp.begin(), tmp.end());
        vecs_.clear();
        norms_.clear();
        for (auto& [n, k] : tmp) {
            norms_.push_back(n);
            vecs_.push_back(std::move(k));
        }
    }

    const Lattice* L_;
    double radius_ = 0;
    std::vector<IntVec> vecs_;
    std::vector<double> norms_;
};

}  // namespace torus_spectra
