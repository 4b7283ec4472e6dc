#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "normalform.hpp"
#include "params.hpp"
#include "partition.hpp"
#include "submodules.hpp"

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

namespace torus_spectra {

// A block W_{M,beta} of -Delta + N rewritten as (-Delta' + N') + ell2 on Z^{rank M}.
template <class Scalar>
struct ReducedOperator {
    std::shared_ptr<const Lattice> sub;  // dual metric V g* V^T on the module basis, kappa' in module coordinates
    Eigen::VectorXd kappa_prime;         // fractional coordinates on the module basis
    double ell2 = 0;
    IntVec xi_tilde;                     // common gauge translation of the class
    ClassKey label;
    std::vector<int> parent_indices;     // positions in the parent index set, aligned with op.index
    TruncatedOperator<Scalar> op;        // -Delta' + N' on the translated points
    TruncatedOperator<Scalar> potential; // N' alone
    double laplacian_mismatch = 0;       // max | lambda_parent - ell2 - lambda_sub |
};

namespace detail {

inline Eigen::MatrixXd module_dual_metric(const Lattice& L, const Submodule& M) {
    const int r = M.rank();
    Eigen::MatrixXd V(r, L.d);
    for (int a = 0; a < r; ++a) V.row(a) = to_real(M.basis()[a]).transpose();
    Eigen::MatrixXd G = V * L.g_star * V.transpose();
    return 0.5 * (G + G.transpose());
}

}  // namespace detail

// Rewrites a block given by positions in the parent index set. H is -Delta + N on that index set.
template <class Scalar>
ReducedOperator<Scalar> reduce_positions(const Lattice& L, const IndexSet& box, const Mat<Scalar>& H,
                                         const ClassKey& key, std::vector<int> members) {
    const Submodule& M = key.M;
    const int r = M.rank();
    if (r == 0 || r == L.d) throw NothingToReduce("class of rank " + std::to_string(r) + " has nothing to reduce");
    if (members.empty()) throw NothingToReduce("class has no points in the index set");
    std::sort(members.begin(), members.end());
    ReducedOperator<Scalar> out;
    out.label = key;
    const auto f0 = floquet_split(L, box[members.front()], M);
    out.kappa_prime = f0.kappa_coords;
    out.ell2 = f0.ell2;
    out.xi_tilde = f0.xi_tilde;
    out.sub = std::make_shared<const Lattice>(lattice_from_dual_metric(detail::module_dual_metric(L, M), f0.kappa_coords));

    std::vector<IntVec> pts;
    for (int i : members) {
        const auto f = floquet_split(L, box[i], M);
        if (f.xi_tilde != out.xi_tilde || (f.kappa_coords - f0.kappa_coords).cwiseAbs().maxCoeff() > 1e-9)
            throw Error("reduce_block: gauge data not constant on the class");
        pts.push_back(M.module_coordinates(f.zeta));
    }
    out.parent_indices = members;
    auto idx = std::make_shared<const IndexSet>(r, pts);
    const long n = static_cast<long>(members.size());
    Mat<Scalar> block(n, n), pot(n, n);
    for (long b = 0; b < n; ++b)
        for (long a = 0; a < n; ++a) block(a, b) = H(members[a], members[b]);
    pot = block;
    for (long a = 0; a < n; ++a) {
        block(a, a) -= Scalar(out.ell2);
        const double lam_sub = out.sub->free_eigenvalue(pts[a]);
        pot(a, a) -= Scalar(out.ell2 + lam_sub);
        const double lam_parent = L.free_eigenvalue(box[members[a]]);
        out.laplacian_mismatch =
            std::max(out.laplacian_mismatch, std::abs(lam_parent - out.ell2 - lam_sub) / std::max(1.0, lam_parent));
    }
    out.op = TruncatedOperator<Scalar>{idx, block, "reduced"};
    out.potential = TruncatedOperator<Scalar>{idx, pot, "reduced_potential"};
    return out;
}

// Reduces the certain part of class `key` of the partition, using the normal form on the same box.
template <class Scalar>
ReducedOperator<Scalar> reduce_block(const NormalFormOutput<Scalar>& nf, const PartitionResult& P, const ClassKey& key) {
    const Lattice& L = *nf.lattice;
    const IndexSet& box = *nf.N_op.index;
    std::vector<int> members;
    for (std::size_t i = 0; i < box.size(); ++i) {
        const int j = P.points.find(box[i]);
        if (j < 0 || !P.labels[j].certain) continue;
        if (P.labels[j].M == key.M && P.labels[j].beta == key.beta) members.push_back(static_cast<int>(i));
    }
    return reduce_positions<Scalar>(L, box, nf.normal_form_hamiltonian(), key, std::move(members));
}

struct ReductionNode {
    int id = 0;
    int parent = -1;
    int depth = 0;
    int dim = 0;                   // dimension of the operator at this node
    std::vector<IntVec> module;    // basis of M in the parent's coordinates (empty at the root)
    IntVec beta;                   // class representative in the parent's coordinates
    double ell2 = 0;               // shift added at this reduction
    double ell2_total = 0;         // accumulated shift from the root
    std::size_t size = 0;
    std::string kind;              // root | reduced | leaf
    std::vector<double> spectrum;  // eigenvalues in root units (shift included), ascending
    double spectral_mismatch = 0;  // max |parent block eig - (node eig + ell2)|
    std::size_t multiplier_classes = 0;  // rank-0 classes inside this node
    std::size_t finite_blocks = 0;       // full-rank classes inside this node
    std::vector<int> children;
};

struct ReductionTree {
    std::vector<ReductionNode> nodes;
    int max_depth() const {
        int m = 0;
        for (const auto& n : nodes) m = std::max(m, n.depth);
        return m;
    }
};

struct ReductionOptions {
    int depth = 2;
    int steps = 2;
    SplitPolicy policy = SplitPolicy::Sharp;
    std::size_t min_block = 1;
};

namespace detail {

template <class Scalar>
std::vector<double> sorted_eigs(const Mat<Scalar>& H) {
    if (H.rows() == 0) return {};
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(H, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SolverFailure("eigensolver did not converge");
    std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(v.begin(), v.end());
    return v;
}

inline Params sub_params(const Params& p, int dsub) {
    Params q = p;
    q.C.resize(static_cast<std::size_t>(dsub + 1));
    q.D.resize(static_cast<std::size_t>(dsub + 1));
    try {
        validate(q, dsub);
    } catch (const InvalidParams& e) {
        throw ParamsInvalidForSublattice(std::string("sub-lattice of dimension ") + std::to_string(dsub) + ": " +
                                         e.what());
    }
    return q;
}

// Partitions the node's index set, conjugates its potential to normal form and reduces every nontrivial class.
template <class Scalar>
void expand_node(ReductionTree& tree, int node_id, const Lattice& L, std::shared_ptr<const IndexSet> box,
                 const Mat<Scalar>& potential, const Params& p, const ReductionOptions& opt, long margin) {
    const auto P = partition_with_escalation(L, *box, p).partition;
    const auto nf = normal_form_matrix<Scalar>(L, box, potential, P.params, opt.steps, margin, opt.policy);
    const Mat<Scalar> H = nf.normal_form_hamiltonian();
    if (tree.nodes[node_id].spectrum.empty())
        for (double e : sorted_eigs(H)) tree.nodes[node_id].spectrum.push_back(e + tree.nodes[node_id].ell2_total);
    std::map<ClassKey, std::vector<int>> classes;
    for (std::size_t i = 0; i < box->size(); ++i) {
        const auto& lab = P.labels[static_cast<std::size_t>(P.points.find((*box)[i]))];
        if (lab.certain) classes[ClassKey{lab.M, lab.beta}].push_back(static_cast<int>(i));
    }
    for (const auto& [key, members] : classes) {
        const int r = key.M.rank();
        if (r == 0) {
            ++tree.nodes[node_id].multiplier_classes;
            continue;
        }
        if (r == L.d) {
            ++tree.nodes[node_id].finite_blocks;
            continue;
        }
        if (members.size() < opt.min_block) continue;
        bool coupled = false;
        for (int a : members)
            for (int b : members)
                if (a != b && H(a, b) != Scalar(0)) coupled = true;
        if (!coupled) {
            ++tree.nodes[node_id].multiplier_classes;
            continue;
        }
        const auto red = reduce_positions<Scalar>(L, *box, H, key, members);
        Mat<Scalar> parent_block(members.size(), members.size());
        for (std::size_t b = 0; b < members.size(); ++b)
            for (std::size_t a = 0; a < members.size(); ++a) parent_block(a, b) = H(members[a], members[b]);
        const auto pe = sorted_eigs(parent_block);
        const auto re = sorted_eigs(red.op.mat);
        ReductionNode n;
        n.id = static_cast<int>(tree.nodes.size());
        n.parent = node_id;
        n.depth = tree.nodes[node_id].depth + 1;
        n.dim = r;
        n.module = key.M.basis();
        n.beta = key.beta;
        n.ell2 = red.ell2;
        n.ell2_total = tree.nodes[node_id].ell2_total + red.ell2;
        n.size = members.size();
        for (std::size_t a = 0; a < re.size(); ++a) {
            n.spectral_mismatch = std::max(n.spectral_mismatch, std::abs(pe[a] - (re[a] + red.ell2)) / std::max(1.0, std::abs(pe[a])));
            n.spectrum.push_back(re[a] + n.ell2_total);
        }
        const bool recurse = r >= 2 && n.depth < opt.depth;
        n.kind = recurse ? "reduced" : "leaf";
        tree.nodes[node_id].children.push_back(n.id);
        tree.nodes.push_back(n);
        if (recurse)
            expand_node<Scalar>(tree, n.id, *red.sub, red.op.index, red.potential.mat, sub_params(p, r), opt, 0);
    }
}

}  // namespace detail

// Root partition and normal form, then recursive reduction of the nontrivial classes.
template <class Scalar>
ReductionTree iterate_reduction(const Lattice& L, const FourierSymbol& V, std::shared_ptr<const IndexSet> box,
                                const Params& p, const ReductionOptions& opt = {}) {
    if (opt.depth < 1) throw InvalidParams("reduction depth must be at least 1");
    ReductionTree tree;
    ReductionNode root;
    root.kind = "root";
    root.dim = L.d;
    root.size = box->size();
    tree.nodes.push_back(root);
    const Mat<Scalar> Vm = weyl_matrix<Scalar>(L, V, box).mat;
    const long margin = static_cast<long>(opt.steps) * V.support_radius() * 2;
    detail::expand_node<Scalar>(tree, 0, L, box, Vm, p, opt, margin);
    return tree;
}

}  // namespace torus_spectra
