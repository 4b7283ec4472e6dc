// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
#include <torus_spectra/dimred.hpp>
#include <torus_spectra/normalform.hpp>
#include <torus_spectra/partition.hpp>
#include <torus_spectra/spectra.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace torus_spectra;

namespace {

constexpr double kRuntimeLimit = 120.0;     // seconds, criterion 1
constexpr double kDensityFloor = 0.8;       // criterion 3
constexpr double kUnitarityTol = 1e-10;     // criterion 4
constexpr double kSpectrumTol = 1e-10;      // criteria 4, 8
constexpr double kSlopeBand = 0.30;         // criterion 6, relative
constexpr double kSeriesTol = 5e-3;         // criterion 7
constexpr double kSeriesTolAtFive = 1e-3;   // criterion 7, xi = 5
constexpr double kFlatSlope = 0.3;          // criterion 11
constexpr int kQuasimodeTrials = 1000;      // criterion 9

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class Scalar>
Mat<Scalar> hamiltonian(const Lattice& L, const FourierSymbol& V, std::shared_ptr<const IndexSet> box) {
    Mat<Scalar> H = weyl_matrix<Scalar>(L, V, box).mat;
    for (std::size_t i = 0; i < box->size(); ++i) H(i, i) += Scalar(L.free_eigenvalue((*box)[i]));
    return H;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

void guarded(int id, const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, false, std::string("exception: ") + e.what());
    }
}

struct PartitionRuns {
    PartitionResult p60, p90;
    GeometryReport r60, r90;
    double seconds60 = 0;
};

PartitionRuns partition_runs(const Eigen::VectorXd& kappa, const Params& p) {
    const Lattice L = euclidean_lattice(2, kappa);
    PartitionRuns out;
    auto t0 = std::chrono::steady_clock::now();
    out.p60 = extended_partition(L, ball(L, 60), p);
    out.r60 = verify_geometry(out.p60);
    out.seconds60 = seconds_since(t0);
    out.p90 = extended_partition(L, ball(L, 90), p);
    out.r90 = verify_geometry(out.p90, {20, 40, 60, 90});
    return out;
}

}  // namespace

int main() {
    const Params p2 = Params::defaults(2, 0.05, 0.5, 1.1);
    const Params p1 = Params::defaults(1, 0.05, 0.5, 1.1);
    std::printf("acceptance suite, %d worker(s)\n", worker_count());

    std::vector<std::pair<std::string, PartitionRuns>> runs;
    guarded(1, [&] {
        runs.emplace_back("kappa=0", partition_runs(vec({0.0, 0.0}), p2));
        runs.emplace_back("kappa=(0.3,0.2)", partition_runs(vec({0.3, 0.2}), p2));
        bool ok = true;
        std::ostringstream d;
        for (const auto& [name, r] : runs) {
            const auto& P = r.p60;
            const bool one_label = P.labels.size() == P.points.size() && P.overlaps.empty() && P.all_certain();
            const std::size_t viol = r.r60.nesting_violations + r.r60.separation_violations + r.r60.overlap_violations;
            ok = ok && one_label && viol == 0 && r.seconds60 <= kRuntimeLimit;
            d << name << ": points " << P.points.size() << ", certain " << (P.all_certain() ? "all" : "not all")
              << ", violations " << viol << ", " << r.seconds60 << " s; ";
        }
        report(1, ok, d.str());
    });

    guarded(2, [&] {
        bool ok = !runs.empty();
        std::ostringstream d;
        for (const auto& [name, r] : runs) {
            const double a = r.p60.top_block_radius(), b = r.p90.top_block_radius();
            ok = ok && std::isfinite(a) && std::abs(a - b) <= 1e-9 && r.p60.count_level(2) > 0;
            d << name << ": n_obs(60) " << a << ", n_obs(90) " << b << "; ";
        }
        report(2, ok, d.str());
    });

    guarded(3, [&] {
        bool ok = !runs.empty();
        std::ostringstream d;
        for (const auto& [name, r] : runs) {
            std::vector<double> dens;
            for (double R : {20.0, 40.0, 60.0, 90.0}) dens.push_back(r.p90.density_e0(R));
            const bool mono = std::is_sorted(dens.begin(), dens.end());
            ok = ok && mono && dens.back() >= kDensityFloor;
            d << name << ": ";
            for (double x : dens) d << x << " ";
            d << "; ";
        }
        report(3, ok, d.str());
    });

    // shared d = 2 run for criteria 4, 5, 8
    const Lattice E2 = euclidean_lattice(2);
    const auto V2 = FourierSymbol::cosines(2, {{1, 0}, {0, 1}});
    const auto box20 = std::make_shared<const IndexSet>(ball(E2, 20));
    std::optional<NormalFormOutput<double>> nf20;
    std::optional<PartitionResult> part20;
    guarded(4, [&] {
        nf20 = normal_form<double>(E2, V2, box20, p2, 3);
        const long n = static_cast<long>(box20->size());
        const double unit = (nf20->U.transpose() * nf20->U - Mat<double>::Identity(n, n)).cwiseAbs().maxCoeff();
        const Mat<double> H = hamiltonian<double>(E2, V2, box20);
        const Mat<double> UHU = nf20->U * H * nf20->U.transpose();
        const auto e1 = eigensolve<double>(H, false).values;
        const auto e2 = eigensolve<double>(Mat<double>(0.5 * (UHU + UHU.transpose())), false).values;
        const double spec = (e1 - e2).cwiseAbs().maxCoeff();
        std::ostringstream d;
        d << "modes " << n << ", |U*U - I| " << unit << ", spectra " << spec;
        report(4, n == 1257 && unit <= kUnitarityTol && spec <= kSpectrumTol, d.str());
    });

    guarded(5, [&] {
        if (!nf20) throw Error("criterion 4 run unavailable");
        part20 = extended_partition(E2, *box20, p2);
        const auto bi = verify_block_invariance(*nf20, *part20);
        std::size_t classes = 0;
        for (const auto& [key, idx] : part20->classes())
            if (key.M.rank() > 0) ++classes;
        std::ostringstream d;
        d << "max off-block " << bi.max_violation << " over " << classes << " nontrivial classes";
        report(5, bi.max_violation == 0.0 && part20->all_certain(), d.str());
    });

    guarded(6, [&] {
        const Lattice E1 = euclidean_lattice(1);
        const auto box = std::make_shared<const IndexSet>(rectangle({-40}, {40}));
        const auto nf = normal_form<double>(E1, FourierSymbol::cosines(1, {{1}}), box, p1, 2);
        bool ok = true;
        std::ostringstream d;
        for (int s = 1; s <= 2; ++s) {
            std::vector<std::vector<double>> xs;
            std::vector<double> r;
            for (std::size_t a = 0; a < nf.interior.size(); ++a) {
                const IntVec& xi = (*box)[nf.interior[a]];
                if (std::labs(xi[0]) < 4) continue;  // resonant core
                xs.push_back({E1.bracket(E1.shifted(xi))});
                r.push_back(nf.diagnostics[s - 1].interior_row_norms[a]);
            }
            const auto f = log_log_fit(xs, r);
            const double target = -2.0 * p1.delta * s;
            ok = ok && std::abs(f.slopes[0] - target) <= kSlopeBand * std::abs(target);
            d << "N=" << s << " slope " << f.slopes[0] << " (target " << target << "); ";
        }
        report(6, ok, d.str());
    });

    guarded(7, [&] {
        const Lattice E1 = euclidean_lattice(1);
        const auto V = FourierSymbol::cosines(1, {{1}});
        const auto box = std::make_shared<const IndexSet>(rectangle({-40}, {40}));
        const auto nf = normal_form<double>(E1, V, box, p1, 2);
        const auto P = extended_partition(E1, *box, p1);
        const auto S = label_eigenvalues(eigensolve<double>(hamiltonian<double>(E1, V, box), false).values, nf, P);
        double worst = 0, at5 = 0;
        int n = 0;
        for (const auto& e : S.entries) {
            const double x = double(e.xi[0]);
            const double series = x * x + 1.0 / (x * x - (x + 1) * (x + 1)) + 1.0 / (x * x - (x - 1) * (x - 1));
            if (e.xi[0] == 5) at5 = std::abs(e.lambda - series);
            if (std::abs(x) < 10 || std::abs(x) > 30) continue;
            worst = std::max(worst, std::abs(e.lambda - series));
            ++n;
        }
        std::ostringstream d;
        d << n << " labels, max |lambda - series| " << worst << ", at xi=5 " << at5;
        report(7, S.bijective && n == 42 && worst <= kSeriesTol && at5 <= kSeriesTolAtFive, d.str());
    });

    guarded(8, [&] {
        if (!nf20 || !part20) throw Error("criterion 4/5 runs unavailable");
        double worst = 0;
        int blocks = 0;
        auto check_run = [&](const auto& nf, const PartitionResult& P) {
            using S = typename std::decay_t<decltype(nf.U)>::Scalar;
            const Mat<S> H = nf.normal_form_hamiltonian();
            for (const auto& [key, idx] : P.classes()) {
                if (key.M.rank() == 0 || key.M.rank() == 2) continue;
                const auto red = reduce_block(nf, P, key);
                Mat<S> B(red.op.size(), red.op.size());
                for (std::size_t b = 0; b < red.op.size(); ++b)
                    for (std::size_t a = 0; a < red.op.size(); ++a) B(a, b) = H(red.parent_indices[a], red.parent_indices[b]);
                const auto pe = eigensolve<S>(B, false).values, re = eigensolve<S>(red.op.mat, false).values;
                for (Eigen::Index a = 0; a < pe.size(); ++a) worst = std::max(worst, std::abs(pe[a] - re[a] - red.ell2));
                ++blocks;
            }
        };
        check_run(*nf20, *part20);
        const Lattice Hx = hexagonal_lattice(vec({0.17, 0.41}));
        const auto boxh = std::make_shared<const IndexSet>(rectangle({-16, -16}, {16, 16}));
        const auto Vh = FourierSymbol::trig(2, {{{1, 0}, cplx(0.6, 0.2)}, {{0, 1}, cplx(0.5, 0)}, {{1, 1}, cplx(0, 0.3)}}, false);
        check_run(normal_form<cplx>(Hx, Vh, boxh, p2, 2), extended_partition(Hx, *boxh, p2));
        std::ostringstream d;
        d << blocks << " blocks, max |eig(block) - eig(reduced) - ell2| " << worst;
        report(8, blocks > 0 && worst <= kSpectrumTol, d.str());
    });

    guarded(9, [&] {
        std::mt19937_64 rng(20240611);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        int held = 0, bad = 0;
        for (int trial = 0; trial < kQuasimodeTrials; ++trial) {
            const int n = 30;
            std::vector<double> dg;
            double x = 0;
            for (int i = 0; i < n; ++i) dg.push_back(x += (u(rng) < 0.25) ? 2.0 + 6.0 * u(rng) : 0.05 * u(rng));
            Mat<double> H0 = Eigen::Map<Eigen::VectorXd>(dg.data(), n).asDiagonal();
            Mat<double> G = Mat<double>::NullaryExpr(n, n, [&]() { return u(rng) - 0.5; });
            const Mat<double> H1 = std::pow(10.0, -1.0 - 4.0 * u(rng)) * (G + G.transpose());
            const std::size_t first = static_cast<std::size_t>(u(rng) * n);
            std::size_t last = first;
            while (last + 1 < std::size_t(n) && dg[last + 1] - dg[last] < 1.0) ++last;
            const auto q = quasimode_match<double>(eigensolve<double>(H0), H1, first, last, 0.25 + 0.7 * u(rng), &H0);
            held += q.hypothesis;
            bad += q.hypothesis && !q.conclusion;
        }
        std::ostringstream d;
        d << kQuasimodeTrials << " trials, hypothesis held " << held << ", counterexamples " << bad;
        report(9, bad == 0 && held > 0, d.str());
    });

    guarded(10, [&] {
        int weyl_bad = 0, weyl_checks = 0, built = 0, cluster_bad = 0, exhausted = 0;
        for (const Lattice& L : {euclidean_lattice(2, vec({0.3, 0.2})), hexagonal_lattice(vec({0.1, 0.4}))}) {
            const auto box = std::make_shared<const IndexSet>(ball(L, 24));
            const auto ev = eigensolve<double>(hamiltonian<double>(L, V2, box), false).values;
            const std::vector<double> e(ev.data(), ev.data() + ev.size());
            for (double R : {5.0, 10.0, 20.0}) {
                const auto w = weyl_count_check(e, L, R, 4.0);
                ++weyl_checks;
                weyl_bad += !(w.hypothesis && w.holds());
            }
            for (double Lw : {0.5, 1.0, 2.0, 4.0}) {
                try {
                    const auto cd = find_clusters(e, Lw, 1.0);
                    ++built;
                    cluster_bad += !check_clusters(cd, cluster_count_constant(L), L.d).ok();
                } catch (const WindowExhausted&) {
                    ++exhausted;
                }
            }
        }
        std::ostringstream d;
        d << "Weyl violations " << weyl_bad << "/" << weyl_checks << ", cluster decompositions " << built
          << " (invalid " << cluster_bad << ", window exhausted " << exhausted << ")";
        report(10, weyl_bad == 0 && built > 0 && cluster_bad == 0, d.str());
    });

    guarded(11, [&] {
        const auto box = std::make_shared<const IndexSet>(rectangle({4, -14}, {46, 14}));
        const auto nf = normal_form<double>(E2, V2, box, p2, 2);
        const auto P = extended_partition(E2, *box, p2);
        const auto S = label_eigenvalues(eigensolve<double>(hamiltonian<double>(E2, V2, box), false).values, nf, P);
        const Submodule M = saturate({{0, 1}}, 2);
        const auto f = directional_fit(E2, S, [&](const LabeledEigenvalue& e) { return e.label.M == M; }, M);
        // diagnostic only: the same regression on lambda - |xi + kappa|^2
        std::vector<std::vector<double>> xs;
        std::vector<double> dev;
        for (const auto& e : S.entries) {
            if (!e.interior || e.ambiguous || !(e.label.M == M)) continue;
            const auto pr = project(E2, E2.shifted(e.xi), M);
            xs.push_back({std::sqrt(1.0 + E2.norm2(pr.along)), std::sqrt(1.0 + E2.norm2(pr.orthogonal))});
            dev.push_back(e.lambda - E2.free_eigenvalue(e.xi));
        }
        const auto g = log_log_fit(xs, dev);
        std::ostringstream d;
        d << f.points << " points, slope along M " << f.slopes[0] << " +- " << f.half_width[0] << ", across M "
          << f.slopes[1] << " +- " << f.half_width[1] << " [free-eigenvalue deviation: " << g.slopes[0] << ", "
          << g.slopes[1] << "]";
        report(11, f.slopes[0] + f.half_width[0] < 0 && std::abs(f.slopes[1]) < kFlatSlope, d.str());
    });

    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
