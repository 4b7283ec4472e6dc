#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "normalform.hpp"
#include "partition.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace torus_spectra {

template <class Scalar>
struct Eigenpairs {
    Eigen::VectorXd values;  // ascending
    Mat<Scalar> vectors;     // columns
    double max_residual = 0;        // max |A v - lambda v|
    double orthonormality_error = 0;
};

template <class Scalar>
Eigenpairs<Scalar> eigensolve(const Mat<Scalar>& A, bool vectors = true) {
    Eigenpairs<Scalar> out;
    if (A.rows() == 0) return out;
    const double defect = (A - A.adjoint()).cwiseAbs().maxCoeff();
    if (defect > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff())) throw NotSelfAdjoint("eigensolve: input not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(A, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SolverFailure("eigensolve: no convergence");
    out.values = es.eigenvalues();
    if (!vectors) return out;
    out.vectors = es.eigenvectors();
    const double scale = std::max(std::abs(out.values[0]), std::abs(out.values[out.values.size() - 1]));
    const Mat<Scalar> res = A * out.vectors - out.vectors * out.values.asDiagonal();
    for (Eigen::Index j = 0; j < res.cols(); ++j) out.max_residual = std::max(out.max_residual, res.col(j).norm());
    const long n = A.rows();
    out.orthonormality_error = (out.vectors.adjoint() * out.vectors - Mat<Scalar>::Identity(n, n)).cwiseAbs().maxCoeff();
    if (out.max_residual > 1e-9 * std::max(1.0, scale) || out.orthonormality_error > 1e-9)
        throw SolverFailure("eigensolve: residual " + std::to_string(out.max_residual) + " above tolerance");
    return out;
}

struct WeylCheck {
    std::size_t count = 0;
    double bound = 0;
    double R = 0;
    bool hypothesis = true;  // R^2 > 3 sup|m|
    bool holds() const { return static_cast<double>(count) <= bound; }
};

// #{lambda : |lambda| <= R^2} against (4/c1)^d R^d with c1 = sqrt(coercivity).
inline WeylCheck weyl_count_check(const std::vector<double>& eigs, const Lattice& L, double R, double sup_m = 0) {
    WeylCheck w;
    w.R = R;
    w.hypothesis = R * R > 3.0 * sup_m;
    for (double e : eigs)
        if (std::abs(e) <= R * R) ++w.count;
    w.bound = std::pow(4.0 / std::sqrt(L.coercivity), L.d) * std::pow(R, L.d);
    return w;
}

struct Cluster {
    std::size_t first = 0, last = 0;  // inclusive indices into the eigenvalue list
    double a = 0, b = 0;
    std::size_t count() const { return last - first + 1; }
};

struct ClusterDecomposition {
    std::vector<Cluster> clusters;
    std::vector<double> gaps;  // gaps[j] separates clusters j and j+1
    double L = 0, N_exp = 0;
};

// Gap threshold after a cluster ending at b.
inline double cluster_gap_threshold(double L, double b, double N_exp) {
    return L / std::pow(std::max(std::abs(b), 1.0), N_exp);
}

// Greedy left-to-right: a cluster starting at a closes at the first gap >= L/b^N_exp inside [a, a+2L].
inline ClusterDecomposition find_clusters(const std::vector<double>& eigs, double L, double N_exp = 1.0) {
    if (!std::is_sorted(eigs.begin(), eigs.end())) throw Error("find_clusters: eigenvalues must be sorted");
    if (!(L > 0)) throw InvalidParams("find_clusters: L must be positive");
    ClusterDecomposition out;
    out.L = L;
    out.N_exp = N_exp;
    std::size_t i = 0;
    while (i < eigs.size()) {
        Cluster c{i, i, eigs[i], eigs[i]};
        while (c.last + 1 < eigs.size()) {
            const double gap = eigs[c.last + 1] - eigs[c.last];
            if (gap >= cluster_gap_threshold(L, eigs[c.last], N_exp)) break;
            if (eigs[c.last + 1] > c.a + 2.0 * L)
                throw WindowExhausted("no qualifying gap within 2L of " + std::to_string(c.a));
            ++c.last;
        }
        c.b = eigs[c.last];
        if (!out.clusters.empty()) out.gaps.push_back(c.a - out.clusters.back().b);
        out.clusters.push_back(c);
        i = c.last + 1;
    }
    return out;
}

// Count constant of the cluster bound: the Weyl bound at R^2 = 2b.
inline double cluster_count_constant(const Lattice& L) {
    return std::pow(4.0 / std::sqrt(L.coercivity), L.d) * std::pow(2.0, L.d / 2.0);
}

struct ClusterInvariants {
    std::size_t width_violations = 0, gap_violations = 0, count_violations = 0;
    bool ok() const { return width_violations + gap_violations + count_violations == 0; }
};

inline ClusterInvariants check_clusters(const ClusterDecomposition& cd, double count_constant, int d) {
    ClusterInvariants r;
    for (std::size_t j = 0; j < cd.clusters.size(); ++j) {
        const auto& c = cd.clusters[j];
        if (c.b - c.a > 2.0 * cd.L) ++r.width_violations;
        if (j + 1 < cd.clusters.size() && cd.gaps[j] < cluster_gap_threshold(cd.L, c.b, cd.N_exp)) ++r.gap_violations;
        if (static_cast<double>(c.count()) > count_constant * std::pow(std::max(std::abs(c.b), 1.0), d / 2.0))
            ++r.count_violations;
    }
    return r;
}

struct QuasimodeRecord {
    std::size_t M = 0;
    double D = 0, delta = 0, eps_max = 0;
    bool hypothesis = false;
    bool conclusion = false;     // meaningful only when the hypothesis holds
    std::size_t found = 0;       // eigenvalues of H0 + H1 in the interval
};

// Cluster [first, last] of H0's spectrum; H1 the perturbation.
template <class Scalar>
QuasimodeRecord quasimode_match(const Eigenpairs<Scalar>& H0, const Mat<Scalar>& H1, std::size_t first, std::size_t last,
                                double delta, const Mat<Scalar>* H0_matrix = nullptr) {
    QuasimodeRecord q;
    q.M = last - first + 1;
    q.delta = delta;
    const auto& ev = H0.values;
    const Eigen::Index n = ev.size();
    double D = std::numeric_limits<double>::infinity();
    if (first > 0) D = std::min(D, ev[first] - ev[first - 1]);
    if (static_cast<Eigen::Index>(last) + 1 < n) D = std::min(D, ev[last + 1] - ev[last]);
    if (!std::isfinite(D)) {
        const double h0 = std::max(std::abs(ev[0]), std::abs(ev[n - 1]));
        Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(H1, Eigen::EigenvaluesOnly);
        D = h0 + es.eigenvalues().cwiseAbs().maxCoeff() + 1.0;
    }
    q.D = D;
    for (std::size_t k = first; k <= last; ++k) q.eps_max = std::max(q.eps_max, (H1 * H0.vectors.col(k)).norm());
    const double lhs = D * D;
    const double rhs = 16.0 / (M_PI * delta * delta) * std::pow(double(q.M), 3) * q.eps_max * (ev[last] - ev[first] + D);
    q.hypothesis = D > 0 && lhs >= rhs;
    if (!q.hypothesis) return q;
    Mat<Scalar> H = H0_matrix ? Mat<Scalar>(*H0_matrix) : Mat<Scalar>(H0.vectors * ev.asDiagonal() * H0.vectors.adjoint());
    H += H1;
    H = (0.5 * (H + H.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(H, Eigen::EigenvaluesOnly);
    const double lo = ev[first] - delta * D, hi = ev[last] + delta * D;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] > lo && es.eigenvalues()[i] < hi) ++q.found;
    q.conclusion = q.found >= q.M;
    return q;
}

struct LabeledEigenvalue {
    IntVec xi;
    double lambda = 0;
    double prediction = 0;  // matched prediction (block eigenvalue or diagonal)
    double diagonal = 0;    // (-Delta + N)[xi, xi]
    double residual = 0;    // lambda - diagonal
    int eigen_index = -1;
    ClassKey label;
    int cluster = -1;
    bool interior = false;
    bool ambiguous = false;
};

struct LabeledSpectrum {
    std::vector<LabeledEigenvalue> entries;  // in index-set order
    double cluster_radius = 0;               // twice the largest row l1-norm of the remainder
    std::size_t ambiguous = 0;
    bool bijective = false;
};

// Predictions: the diagonal of -Delta + N on trivial classes, sorted block eigenvalues of (-Delta + N)|_W paired
// with the block points in diagonal order elsewhere. Predictions and eigenvalues are then matched by rank,
// which is an optimal assignment for the cost |lambda - prediction| on the line. Equal predictions are flagged.
template <class Scalar>
LabeledSpectrum label_eigenvalues(const Eigen::VectorXd& eigs, const NormalFormOutput<Scalar>& nf, const PartitionResult& P) {
    const IndexSet& box = *nf.N_op.index;
    const std::size_t n = box.size();
    if (static_cast<std::size_t>(eigs.size()) != n) throw Error("label_eigenvalues: spectrum size differs from the box");
    const Mat<Scalar> Ht = nf.normal_form_hamiltonian();
    LabeledSpectrum out;
    out.entries.resize(n);
    std::vector<bool> interior(n, false);
    for (int i : nf.interior) interior[static_cast<std::size_t>(i)] = true;
    std::map<ClassKey, std::vector<int>> classes;
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = out.entries[i];
        e.xi = box[i];
        e.diagonal = std::real(Ht(i, i));
        e.interior = interior[i];
        const int j = P.points.find(box[i]);
        if (j < 0) throw Error("label_eigenvalues: point missing from the partition");
        e.label = ClassKey{P.labels[j].M, P.labels[j].beta};
        classes[e.label].push_back(static_cast<int>(i));
    }
    for (const auto& [key, members] : classes) {
        if (members.size() == 1) {
            out.entries[members[0]].prediction = out.entries[members[0]].diagonal;
            continue;
        }
        const long m = static_cast<long>(members.size());
        Mat<Scalar> B(m, m);
        for (long b = 0; b < m; ++b)
            for (long a = 0; a < m; ++a) B(a, b) = Ht(members[a], members[b]);
        Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(B, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw SolverFailure("block eigensolve failed");
        std::vector<int> order(members);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return out.entries[a].diagonal < out.entries[b].diagonal;
        });
        for (long a = 0; a < m; ++a) out.entries[order[a]].prediction = es.eigenvalues()[a];
    }
    // remainder size sets the cluster scale
    double rho = 0;
    for (std::size_t i = 0; i < n; ++i) rho = std::max(rho, nf.R_op.mat.row(i).cwiseAbs().sum());
    out.cluster_radius = 2.0 * rho;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (out.entries[a].prediction != out.entries[b].prediction)
            return out.entries[a].prediction < out.entries[b].prediction;
        return out.entries[a].xi < out.entries[b].xi;
    });
    int cluster = 0;
    for (std::size_t r = 0; r < n; ++r) {
        auto& e = out.entries[order[r]];
        if (r > 0 && e.prediction - out.entries[order[r - 1]].prediction > out.cluster_radius) ++cluster;
        e.cluster = cluster;
        e.eigen_index = static_cast<int>(r);
        e.lambda = eigs[static_cast<Eigen::Index>(r)];
        e.residual = e.lambda - e.diagonal;
        for (std::size_t s : {r - 1, r + 1}) {
            if (s >= n) continue;
            const double p = out.entries[order[s]].prediction;
            if (std::abs(p - e.prediction) <= 1e-9 * std::max(1.0, std::abs(p)) &&
                std::abs(eigs[static_cast<Eigen::Index>(s)] - e.lambda) > 1e-12 * std::max(1.0, std::abs(e.lambda)))
                e.ambiguous = true;
        }
        if (e.ambiguous) ++out.ambiguous;
    }
    std::vector<int> hit(n, 0);
    for (const auto& e : out.entries) ++hit[static_cast<std::size_t>(e.eigen_index)];
    out.bijective = std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; });
    return out;
}

// sqrt(sum <xi+kappa>^{2s} |u_xi|^2)
template <class Derived>
double neg_sobolev_norm(const Lattice& L, const IndexSet& box, const Eigen::MatrixBase<Derived>& u, double s) {
    if (s > 0) throw InvalidParams("neg_sobolev_norm: order must be nonpositive");
    double acc = 0;
    for (std::size_t i = 0; i < box.size(); ++i)
        acc += std::pow(L.bracket(L.shifted(box[i])), 2.0 * s) * std::norm(u[static_cast<Eigen::Index>(i)]);
    return std::sqrt(acc);
}

struct FitResult {
    std::vector<double> slopes;      // one per regressor
    std::vector<double> half_width;  // 95% band
    double intercept = 0;
    std::size_t points = 0;
    bool exact = false;              // every residual vanished
};

// Ordinary least squares of log|r| on log x_j (plus intercept).
inline FitResult log_log_fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& r,
                             std::size_t min_points = 8) {
    FitResult f;
    std::vector<std::size_t> keep;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == 0.0) {
            ++zeros;
            continue;
        }
        keep.push_back(i);
    }
    const std::size_t p = xs.empty() ? 0 : xs[0].size();
    if (!r.empty() && zeros == r.size()) {
        f.exact = true;
        f.points = r.size();
        f.slopes.assign(p, 0.0);
        f.half_width.assign(p, 0.0);
        return f;
    }
    if (keep.size() < std::max(min_points, p + 2)) throw InsufficientData("fit needs at least " + std::to_string(min_points) + " nonzero residuals");
    const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd X(m, static_cast<Eigen::Index>(p) + 1);
    Eigen::VectorXd y(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        X(a, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) X(a, static_cast<Eigen::Index>(j) + 1) = std::log(xs[keep[a]][j]);
        y[a] = std::log(std::abs(r[keep[a]]));
    }
    const Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
    const Eigen::VectorXd beta = ldlt.solve(X.transpose() * y);
    const double dof = static_cast<double>(m) - static_cast<double>(p) - 1.0;
    const double s2 = (y - X * beta).squaredNorm() / dof;
    const Eigen::MatrixXd cov = s2 * ldlt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    const double tq = boost::math::quantile(boost::math::students_t(dof), 0.975);
    f.intercept = beta[0];
    f.points = keep.size();
    for (std::size_t j = 0; j < p; ++j) {
        f.slopes.push_back(beta[static_cast<Eigen::Index>(j) + 1]);
        f.half_width.push_back(tq * std::sqrt(std::max(0.0, cov(j + 1, j + 1))));
    }
    return f;
}

// Residual decay against <(xi+kappa)_M> for labeled points of the classes accepted by `filter`.
template <class Filter>
FitResult asymptotic_fit(const Lattice& L, const LabeledSpectrum& S, Filter filter, const Submodule& M,
                         std::size_t min_points = 8) {
    std::vector<std::vector<double>> xs;
    std::vector<double> r;
    for (const auto& e : S.entries) {
        if (!e.interior || e.ambiguous || !filter(e)) continue;
        const auto pr = project(L, L.shifted(e.xi), M);
        xs.push_back({std::sqrt(1.0 + L.norm2(pr.along))});
        r.push_back(e.residual);
    }
    return log_log_fit(xs, r, min_points);
}

// Joint fit against <(xi+kappa)_M> and <(xi+kappa)_{M perp}>.
template <class Filter>
FitResult directional_fit(const Lattice& L, const LabeledSpectrum& S, Filter filter, const Submodule& M,
                          std::size_t min_points = 8) {
    std::vector<std::vector<double>> xs;
    std::vector<double> r;
    for (const auto& e : S.entries) {
        if (!e.interior || e.ambiguous || !filter(e)) continue;
        const auto pr = project(L, L.shifted(e.xi), M);
        xs.push_back({std::sqrt(1.0 + L.norm2(pr.along)), std::sqrt(1.0 + L.norm2(pr.orthogonal))});
        r.push_back(e.residual);
    }
    return log_log_fit(xs, r, min_points);
}

}  // namespace torus_spectra
