#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "types.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace torus_spectra {

// Even smooth transition: 1 on |t| <= 1/2, 0 on |t| >= 1.
inline double cutoff(double t) {
    t = std::abs(t);
    if (t <= 0.5) return 1.0;
    if (t >= 1.0) return 0.0;
    auto f = [](double s) { return s > 0 ? std::exp(-1.0 / s) : 0.0; };
    const double a = f(2.0 - 2.0 * t), b = f(2.0 * t - 1.0);
    return a / (a + b);
}

using Evaluator = std::function<cplx(const Eigen::VectorXd&)>;

struct Coefficient {
    Evaluator eval;
    std::optional<cplx> constant;  // set for xi-independent coefficients

    cplx operator()(const Eigen::VectorXd& xi) const { return constant ? *constant : eval(xi); }
};

// a(x, xi) = sum_k a_k(xi) e^{i k.x} with finitely many k.
class FourierSymbol {
public:
    explicit FourierSymbol(int d = 0) : d_(d) {}

    int dim() const { return d_; }
    const std::map<IntVec, Coefficient>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    void set(const IntVec& k, Evaluator f) { terms_[k] = Coefficient{std::move(f), std::nullopt}; }
    void set_constant(const IntVec& k, cplx c) {
        terms_[k] = Coefficient{[c](const Eigen::VectorXd&) { return c; }, c};
    }

    bool has(const IntVec& k) const { return terms_.count(k) != 0; }
    cplx coefficient(const IntVec& k, const Eigen::VectorXd& xi) const {
        auto it = terms_.find(k);
        return it == terms_.end() ? cplx(0) : it->second(xi);
    }

    // largest |k| in the support (sup-norm), used for box margins
    long support_radius() const {
        long r = 0;
        for (const auto& [k, c] : terms_)
            for (long x : k) r = std::max(r, std::labs(x));
        return r;
    }

    bool all_constant() const {
        for (const auto& [k, c] : terms_)
            if (!c.constant) return false;
        return true;
    }

    // real-valued Weyl matrix: constant real coefficients with a_{-k} = a_k
    bool real_matrix() const {
        if (!all_constant()) return false;
        for (const auto& [k, c] : terms_) {
            if (c.constant->imag() != 0.0) return false;
            auto it = terms_.find(neg(k));
            if (it == terms_.end() || *it->second.constant != *c.constant) return false;
        }
        return true;
    }

    // trigonometric polynomial with constant coefficients; mirrors missing -k terms
    static FourierSymbol trig(int d, const std::vector<std::pair<IntVec, cplx>>& terms, bool warn = true) {
        FourierSymbol s(d);
        for (const auto& [k, c] : terms) {
            if (static_cast<int>(k.size()) != d) throw Error("trig: wavevector dimension mismatch");
            s.set_constant(k, s.has(k) ? *s.terms_.at(k).constant + c : c);
        }
        std::vector<std::pair<IntVec, cplx>> added;
        for (const auto& [k, c] : s.terms_) {
            if (!s.has(neg(k))) added.emplace_back(neg(k), std::conj(*c.constant));
        }
        for (const auto& [k, c] : added) {
            if (warn)
                std::cerr << "warning: potential term " << to_string(k)
                          << " added as the conjugate mirror (hermitian closure)\n";
            s.set_constant(k, c);
        }
        return s;
    }

    // 2 cos(k.x) summed over the given k
    static FourierSymbol cosines(int d, const std::vector<IntVec>& ks, double amplitude = 1.0) {
        std::vector<std::pair<IntVec, cplx>> t;
        for (const auto& k : ks) {
            t.emplace_back(k, amplitude);
            t.emplace_back(neg(k), amplitude);
        }
        return trig(d, t, false);
    }

private:
    int d_;
    std::map<IntVec, Coefficient> terms_;
};

// Checks a_{-k}(xi) = conj(a_k(xi)) at sample points.
inline void check_hermitian(const FourierSymbol& a, const std::vector<Eigen::VectorXd>& samples, double tol = 1e-12) {
    for (const auto& [k, c] : a.terms()) {
        for (const auto& xi : samples) {
            const cplx v = c(xi), w = a.coefficient(neg(k), xi);
            if (std::abs(v - std::conj(w)) > tol * std::max(1.0, std::abs(v)))
                throw NotSelfAdjoint("symbol violates a_{-k} = conj(a_k) at k = " + to_string(k));
        }
    }
}

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Hermitian matrix indexed by a finite set of lattice points.
template <class Scalar>
struct TruncatedOperator {
    std::shared_ptr<const IndexSet> index;
    Mat<Scalar> mat;
    std::string tag;

    std::size_t size() const { return index ? index->size() : 0; }

    double hermitian_defect() const {
        const double scale = std::max(1.0, mat.cwiseAbs().maxCoeff());
        return (mat - mat.adjoint()).cwiseAbs().maxCoeff() / scale;
    }
};

namespace detail {

template <class Scalar>
Scalar cast_scalar(cplx v) {
    if constexpr (std::is_same_v<Scalar, double>) {
        if (std::abs(v.imag()) > 1e-14 * std::max(1.0, std::abs(v.real())))
            throw Error("complex matrix element requested as real");
        return v.real();
    } else {
        return v;
    }
}

inline std::vector<Eigen::VectorXd> sample_points(const IndexSet& box, std::size_t n = 64) {
    std::vector<Eigen::VectorXd> out;
    if (box.empty()) return out;
    const std::size_t step = std::max<std::size_t>(1, box.size() / n);
    for (std::size_t i = 0; i < box.size(); i += step) out.push_back(to_real(box[i]));
    return out;
}

}  // namespace detail

// A[xi+h, xi] = a_h(xi + h/2)
template <class Scalar>
TruncatedOperator<Scalar> weyl_matrix(const Lattice& L, const FourierSymbol& a,
                                      std::shared_ptr<const IndexSet> box) {
    (void)L;
    check_hermitian(a, detail::sample_points(*box));
    const long n = static_cast<long>(box->size());
    TruncatedOperator<Scalar> op{box, Mat<Scalar>::Zero(n, n), "weyl"};
    parallel_for(n, [&](long j) {
        const IntVec& xi = (*box)[j];
        const Eigen::VectorXd x = to_real(xi);
        for (const auto& [h, c] : a.terms()) {
            const int i = box->find(add(xi, h));
            if (i < 0) continue;
            op.mat(i, j) = detail::cast_scalar<Scalar>(c(x + 0.5 * to_real(h)));
        }
    });
    if (op.hermitian_defect() > 1e-12) throw NotSelfAdjoint("weyl_matrix: result is not Hermitian");
    return op;
}

template <class Scalar>
TruncatedOperator<Scalar> laplacian_matrix(const Lattice& L, std::shared_ptr<const IndexSet> box) {
    const long n = static_cast<long>(box->size());
    TruncatedOperator<Scalar> op{box, Mat<Scalar>::Zero(n, n), "laplacian"};
    for (long i = 0; i < n; ++i) op.mat(i, i) = Scalar(L.free_eigenvalue((*box)[i]));
    return op;
}

// chi_k(xi) = chi(2 |k|^tau <xi+kappa,k> / <xi+kappa>^delta)
inline double nonresonant_cutoff(const Lattice& L, const Params& p, const IntVec& k, const Eigen::VectorXd& xi) {
    const Eigen::VectorXd x = xi + L.kappa;
    const double nk = L.norm(k);
    return cutoff(2.0 * std::pow(nk, p.tau) * L.dot(x, to_real(k)) / std::pow(L.bracket(x), p.delta));
}

// chi~_k(xi) = chi(|k| / <xi+kappa>^eps)
inline double smoothing_cutoff(const Lattice& L, const Params& p, const IntVec& k, const Eigen::VectorXd& xi) {
    const Eigen::VectorXd x = xi + L.kappa;
    return cutoff(L.norm(k) / std::pow(L.bracket(x), p.eps));
}

struct Decomposition {
    FourierSymbol average, nonresonant, resonant, smoothing;
};

inline Evaluator average(const FourierSymbol& a) {
    const IntVec zero(static_cast<std::size_t>(a.dim()), 0);
    if (!a.has(zero)) return [](const Eigen::VectorXd&) { return cplx(0); };
    const Coefficient c = a.terms().at(zero);
    return [c](const Eigen::VectorXd& xi) { return c(xi); };
}

inline Decomposition decompose(const Lattice& L, const FourierSymbol& a, const Params& p) {
    const int d = a.dim();
    Decomposition out{FourierSymbol(d), FourierSymbol(d), FourierSymbol(d), FourierSymbol(d)};
    const IntVec zero(static_cast<std::size_t>(d), 0);
    const auto Lp = std::make_shared<const Lattice>(L);
    for (const auto& [k, c] : a.terms()) {
        if (k == zero) {
            out.average.set(k, c.eval);
            continue;
        }
        const IntVec kk = k;
        const Coefficient cc = c;
        out.nonresonant.set(k, [Lp, p, kk, cc](const Eigen::VectorXd& xi) {
            return cc(xi) * (1.0 - nonresonant_cutoff(*Lp, p, kk, xi)) * smoothing_cutoff(*Lp, p, kk, xi);
        });
        out.resonant.set(k, [Lp, p, kk, cc](const Eigen::VectorXd& xi) {
            return cc(xi) * nonresonant_cutoff(*Lp, p, kk, xi) * smoothing_cutoff(*Lp, p, kk, xi);
        });
        out.smoothing.set(k, [Lp, p, kk, cc](const Eigen::VectorXd& xi) {
            return cc(xi) * (1.0 - smoothing_cutoff(*Lp, p, kk, xi));
        });
    }
    return out;
}

// Lower estimate of sup <xi+kappa>^{delta N2 - m} |d_x^N1 d_xi^N2 a| over grid points, random torus
// points and a set of unit directions.
inline double seminorm_estimate(const Lattice& L, const FourierSymbol& a, int N1, int N2, double m, double delta,
                                const std::vector<Eigen::VectorXd>& grid, std::uint64_t seed = 1) {
    const int d = L.d;
    std::vector<Eigen::VectorXd> xdirs, kdirs;
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
        u[i] = 1.0;
        xdirs.push_back(u / std::sqrt(u.dot(L.g * u)));
        kdirs.push_back(u / L.norm(u));
    }
    for (const auto& [k, c] : a.terms()) {
        if (is_zero(k)) continue;
        Eigen::VectorXd u = L.g_star * to_real(k);  // maximises |k.u| over |u|_g = 1
        xdirs.push_back(u / std::sqrt(u.dot(L.g * u)));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 2.0 * M_PI);
    std::vector<Eigen::VectorXd> xs;
    xs.push_back(Eigen::VectorXd::Zero(d));
    for (int i = 0; i < 16; ++i) {
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = ux(rng);
        xs.push_back(x);
    }
    const double h = 1e-4;
    auto binom = [](int n, int k) {
        double r = 1;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    };
    double best = 0;
    for (const auto& xi : grid) {
        const double w = std::pow(L.bracket(xi + L.kappa), delta * N2 - m);
        for (const auto& kd : (N2 > 0 ? kdirs : std::vector<Eigen::VectorXd>{Eigen::VectorXd::Zero(d)})) {
            // central finite difference of order N2 for each coefficient
            std::map<IntVec, cplx> dcoef;
            for (const auto& [k, c] : a.terms()) {
                cplx acc = 0;
                for (int j = 0; j <= N2; ++j) {
                    const double shift = (0.5 * N2 - j) * h;
                    acc += (j % 2 ? -1.0 : 1.0) * binom(N2, j) * c(xi + shift * kd);
                }
                dcoef[k] = acc / std::pow(h, N2);
            }
            for (const auto& ud : xdirs)
                for (const auto& x : xs) {
                    cplx val = 0;
                    for (const auto& [k, v] : dcoef) {
                        const double kx = to_real(k).dot(x), ku = to_real(k).dot(ud);
                        val += v * std::pow(cplx(0, ku), N1) * std::exp(cplx(0, kx));
                    }
                    best = std::max(best, w * std::abs(val));
                }
        }
    }
    return best;
}

}  // namespace torus_spectra
