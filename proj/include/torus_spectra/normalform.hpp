#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "partition.hpp"
#include "symbols.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace torus_spectra {

// How a coupling R[xi+k, xi] is distributed at each step.
//  Sharp:  generator removes R (1 - chi_k); normal form receives R chi_k on the support |k| < <.>^eps of the
//          smoothing cutoff; the rest stays in the remainder.
//  Smooth: generator removes R (1 - chi_k) chi~_k; normal form receives R chi_k chi~_k; R (1 - chi~_k) stays.
enum class SplitPolicy { Sharp, Smooth };

struct StepDiagnostics {
    int step = 0;
    std::vector<double> interior_row_norms;  // aligned with NormalFormOutput::interior
    double max_interior_row_norm = 0;
    double unitarity_error = 0;  // |U U* - I|_max for the step unitary
    double generator_norm = 0;   // max |A|
};

template <class Scalar>
struct NormalFormOutput {
    int steps = 0;
    std::shared_ptr<const Lattice> lattice;
    Params params;
    SplitPolicy policy = SplitPolicy::Sharp;
    long margin = 0;
    std::vector<int> interior;        // indices of points at sup-distance >= margin from the complement
    Eigen::VectorXd lambda0;          // free eigenvalues on the index set
    TruncatedOperator<Scalar> N_op;   // normal form part
    TruncatedOperator<Scalar> R_op;   // remainder
    Mat<Scalar> U;                    // accumulated unitary
    std::vector<StepDiagnostics> diagnostics;
    std::optional<double> subset_leak;  // max |U| across a supplied subset boundary

    // -Delta + N
    Mat<Scalar> normal_form_hamiltonian() const {
        Mat<Scalar> H = N_op.mat;
        for (Eigen::Index i = 0; i < H.rows(); ++i) H(i, i) += Scalar(lambda0[i]);
        return H;
    }
};

namespace detail {

struct SplitWeights {
    double to_generator = 0;
    double to_normal_form = 0;
};

inline SplitWeights split_weights(const Lattice& L, const Params& p, SplitPolicy policy, const IntVec& k,
                                  const Eigen::VectorXd& mid) {
    const double chi = nonresonant_cutoff(L, p, k, mid);
    if (policy == SplitPolicy::Smooth) {
        const double sm = smoothing_cutoff(L, p, k, mid);
        return {(1.0 - chi) * sm, chi * sm};
    }
    const bool short_k = L.norm(k) < std::pow(L.bracket(mid + L.kappa), p.eps);
    return {1.0 - chi, short_k ? chi : 0.0};
}

inline std::vector<int> interior_points(const IndexSet& box, long margin) {
    std::vector<int> out;
    const int d = box.dim();
    for (std::size_t i = 0; i < box.size(); ++i) {
        bool inside = true;
        if (margin > 0)
            detail::for_each_in_box(IntVec(d, -margin), IntVec(d, margin), [&](const IntVec& h) {
                if (inside && !box.contains(add(box[i], h))) inside = false;
            });
        if (inside) out.push_back(static_cast<int>(i));
    }
    return out;
}

template <class Scalar>
long coupling_radius(const Mat<Scalar>& P, const IndexSet& box) {
    long r = 0;
    for (Eigen::Index j = 0; j < P.cols(); ++j)
        for (Eigen::Index i = 0; i < P.rows(); ++i)
            if (P(i, j) != Scalar(0))
                for (std::size_t a = 0; a < box[i].size(); ++a) r = std::max(r, std::labs(box[i][a] - box[j][a]));
    return r;
}

}  // namespace detail

// Complex generator G with G[xi+k, xi] = i R[xi+k, xi] / (lambda_{xi+k} - lambda_xi); diagonal excluded.
template <class Scalar>
Mat<cplx> homological_generator(const Lattice& L, const TruncatedOperator<Scalar>& R_nr) {
    const IndexSet& box = *R_nr.index;
    const long n = static_cast<long>(box.size());
    Mat<cplx> G = Mat<cplx>::Zero(n, n);
    for (long j = 0; j < n; ++j)
        for (long i = 0; i < n; ++i) {
            if (i == j || R_nr.mat(i, j) == Scalar(0)) continue;
            const double gap = L.free_eigenvalue(box[i]) - L.free_eigenvalue(box[j]);
            if (gap == 0.0) throw CutoffLeak("homological_generator: coupling between degenerate free levels");
            G(i, j) = cplx(0, 1) * cplx(R_nr.mat(i, j)) / gap;
        }
    return G;
}

template <class Scalar>
struct StepResult {
    Mat<Scalar> N, R, U;
    StepDiagnostics diag;
};

// One conjugation: H = Lambda + N + R  ->  U H U* = Lambda + N' + R'.
template <class Scalar>
StepResult<Scalar> normal_form_step(const Lattice& L, const Params& p, const IndexSet& box,
                                    const Eigen::VectorXd& lambda0, const Mat<Scalar>& N, const Mat<Scalar>& R,
                                    SplitPolicy policy = SplitPolicy::Sharp) {
    const long n = static_cast<long>(box.size());
    StepResult<Scalar> out;
    Mat<Scalar> A = Mat<Scalar>::Zero(n, n);  // anti-Hermitian, A = -iG
    Mat<Scalar> Nadd = Mat<Scalar>::Zero(n, n);
    std::vector<std::string> leaks(static_cast<std::size_t>(n));
    parallel_for(n, [&](long j) {
        for (long i = 0; i < n; ++i) {
            if (i == j) {
                Nadd(i, i) = R(i, i);
                continue;
            }
            const Scalar r = R(i, j);
            if (r == Scalar(0)) continue;
            const IntVec k = sub(box[i], box[j]);
            const Eigen::VectorXd mid = 0.5 * (to_real(box[i]) + to_real(box[j]));
            const auto w = detail::split_weights(L, p, policy, k, mid);
            if (w.to_normal_form != 0.0) Nadd(i, j) = r * w.to_normal_form;
            if (w.to_generator != 0.0) {
                const double gap = lambda0[i] - lambda0[j];
                const Eigen::VectorXd x = mid + L.kappa;
                const double floor = 0.5 * std::pow(L.bracket(x), p.delta) * std::pow(L.norm(k), -p.tau);
                if (std::abs(gap) < floor * (1.0 - 1e-9))
                    leaks[j] = "small divisor " + std::to_string(gap) + " below cutoff floor at " + to_string(box[j]);
                A(i, j) = r * w.to_generator / gap;
            }
        }
    });
    for (const auto& s : leaks)
        if (!s.empty()) throw CutoffLeak(s);
    out.U = A.exp();
    out.diag.unitarity_error = (out.U * out.U.adjoint() - Mat<Scalar>::Identity(n, n)).cwiseAbs().maxCoeff();
    out.diag.generator_norm = n ? A.cwiseAbs().maxCoeff() : 0.0;
    Mat<Scalar> H = N + R;
    for (long i = 0; i < n; ++i) H(i, i) += Scalar(lambda0[i]);
    Mat<Scalar> H1 = out.U * H * out.U.adjoint();
    H1 = (0.5 * (H1 + H1.adjoint())).eval();
    out.N = N + Nadd;
    out.R = H1 - out.N;
    for (long i = 0; i < n; ++i) out.R(i, i) -= Scalar(lambda0[i]);
    return out;
}

// Normal form of Lambda + P on an arbitrary finite index set.
template <class Scalar>
NormalFormOutput<Scalar> normal_form_matrix(const Lattice& L, std::shared_ptr<const IndexSet> box, const Mat<Scalar>& P,
                                            const Params& p, int steps, long margin,
                                            SplitPolicy policy = SplitPolicy::Sharp,
                                            const std::vector<bool>* subset = nullptr) {
    validate(p, L.d);
    if (steps < 0) throw InvalidParams("steps must be nonnegative");
    NormalFormOutput<Scalar> out;
    out.steps = steps;
    out.lattice = std::make_shared<const Lattice>(L);
    out.params = p;
    out.policy = policy;
    out.margin = margin;
    out.interior = detail::interior_points(*box, margin);
    if (out.interior.empty()) throw InsufficientMargin("no point of the box keeps a margin of " + std::to_string(margin));
    const long n = static_cast<long>(box->size());
    out.lambda0.resize(n);
    for (long i = 0; i < n; ++i) out.lambda0[i] = L.free_eigenvalue((*box)[i]);
    Mat<Scalar> N = Mat<Scalar>::Zero(n, n), R = P;
    out.U = Mat<Scalar>::Identity(n, n);
    for (int s = 1; s <= steps; ++s) {
        auto st = normal_form_step<Scalar>(L, p, *box, out.lambda0, N, R, policy);
        N = std::move(st.N);
        R = std::move(st.R);
        out.U = (st.U * out.U).eval();
        st.diag.step = s;
        for (int i : out.interior) {
            const double rn = R.row(i).norm();
            st.diag.interior_row_norms.push_back(rn);
            st.diag.max_interior_row_norm = std::max(st.diag.max_interior_row_norm, rn);
        }
        out.diagnostics.push_back(std::move(st.diag));
    }
    out.N_op = TruncatedOperator<Scalar>{box, N, "normal_form"};
    out.R_op = TruncatedOperator<Scalar>{box, R, "remainder"};
    if (subset) {
        double leak = 0;
        for (long j = 0; j < n; ++j)
            for (long i = 0; i < n; ++i)
                if ((*subset)[i] != (*subset)[j]) leak = std::max(leak, std::abs(out.U(i, j)));
        out.subset_leak = leak;
    }
    return out;
}

// Normal form of -Delta + V on a box; the margin is steps * (support radius of V) * 2.
template <class Scalar>
NormalFormOutput<Scalar> normal_form(const Lattice& L, const FourierSymbol& V, std::shared_ptr<const IndexSet> box,
                                     const Params& p, int steps, SplitPolicy policy = SplitPolicy::Sharp,
                                     const std::vector<bool>* subset = nullptr) {
    const auto Vm = weyl_matrix<Scalar>(L, V, box);
    const long margin = static_cast<long>(steps) * V.support_radius() * 2;
    return normal_form_matrix<Scalar>(L, box, Vm.mat, p, steps, margin, policy, subset);
}

struct BlockInvarianceReport {
    double max_violation = 0;
    std::size_t violating_entries = 0;
    IntVec worst_from, worst_to;
};

// Largest |(-Delta + N)[xi', xi]| with xi, xi' certain and in different classes.
template <class Scalar>
BlockInvarianceReport verify_block_invariance(const NormalFormOutput<Scalar>& nf, const PartitionResult& P) {
    const IndexSet& box = *nf.N_op.index;
    const long n = static_cast<long>(box.size());
    std::map<ClassKey, int> ids;
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    for (long i = 0; i < n; ++i) {
        const int j = P.points.find(box[i]);
        if (j < 0 || !P.labels[j].certain) continue;
        const ClassKey key{P.labels[j].M, P.labels[j].beta};
        auto it = ids.emplace(key, static_cast<int>(ids.size())).first;
        cls[i] = it->second;
    }
    BlockInvarianceReport rep;
    const Mat<Scalar> H = nf.normal_form_hamiltonian();
    for (long j = 0; j < n; ++j)
        for (long i = 0; i < n; ++i) {
            if (i == j || cls[i] < 0 || cls[j] < 0 || cls[i] == cls[j]) continue;
            const double v = std::abs(H(i, j));
            if (v != 0.0) {
                ++rep.violating_entries;
                if (v > rep.max_violation) {
                    rep.max_violation = v;
                    rep.worst_from = box[j];
                    rep.worst_to = box[i];
                }
            }
        }
    return rep;
}

}  // namespace torus_spectra
