#include <torus_spectra/symbols.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace torus_spectra;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

std::shared_ptr<const IndexSet> box1(long r) { return std::make_shared<const IndexSet>(rectangle({-r}, {r})); }

}  // namespace

TEST(Cutoff, RangeSupportAndMonotone) {
    EXPECT_EQ(cutoff(0.0), 1.0);
    EXPECT_EQ(cutoff(0.5), 1.0);
    EXPECT_EQ(cutoff(-0.5), 1.0);
    EXPECT_EQ(cutoff(1.0), 0.0);
    EXPECT_EQ(cutoff(-3.0), 0.0);
    EXPECT_NEAR(cutoff(0.75), 0.5, 1e-15);  // f(1/2)/(2 f(1/2))
    double prev = 1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double t = 0.5 + 0.5 * i / 1000.0, c = cutoff(t);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
        EXPECT_LE(c, prev);
        EXPECT_DOUBLE_EQ(c, cutoff(-t));
        prev = c;
    }
}

TEST(WeylMatrix, CosinePotential) {
    const Lattice L = euclidean_lattice(1);
    const auto V = FourierSymbol::cosines(1, {{1}});
    const auto box = box1(6);
    const auto A = weyl_matrix<double>(L, V, box);
    for (std::size_t j = 0; j < box->size(); ++j)
        for (std::size_t i = 0; i < box->size(); ++i) {
            const long h = (*box)[i][0] - (*box)[j][0];
            EXPECT_EQ(A.mat(i, j), std::labs(h) == 1 ? 1.0 : 0.0);
        }
}

TEST(WeylMatrix, MultiplierIsDiagonal) {
    const Lattice L = euclidean_lattice(1);
    FourierSymbol a(1);
    a.set({0}, [](const Eigen::VectorXd& xi) { return cplx(1.0 / (1.0 + xi[0] * xi[0])); });
    const auto box = box1(5);
    const auto A = weyl_matrix<double>(L, a, box);
    for (std::size_t i = 0; i < box->size(); ++i) {
        const double x = (*box)[i][0];
        EXPECT_DOUBLE_EQ(A.mat(i, i), 1.0 / (1.0 + x * x));
    }
    EXPECT_EQ((A.mat - Mat<double>(A.mat.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 0.0);
}

TEST(WeylMatrix, MidpointRule) {
    const Lattice L = euclidean_lattice(1);
    FourierSymbol a(1);
    a.set({1}, [](const Eigen::VectorXd& xi) { return cplx(xi[0]); });
    a.set({-1}, [](const Eigen::VectorXd& xi) { return cplx(xi[0]); });
    const auto box = box1(4);
    const auto A = weyl_matrix<double>(L, a, box);
    for (long x = -4; x < 4; ++x) {
        const int j = box->find({x}), i = box->find({x + 1});
        EXPECT_DOUBLE_EQ(A.mat(i, j), x + 0.5);
        EXPECT_DOUBLE_EQ(A.mat(j, i), x + 0.5);
    }
}

TEST(WeylMatrix, NonHermitianSymbolRejected) {
    const Lattice L = euclidean_lattice(1);
    FourierSymbol a(1);
    a.set_constant({1}, cplx(1.0));
    a.set_constant({-1}, cplx(2.0));
    EXPECT_THROW(weyl_matrix<double>(L, a, box1(3)), NotSelfAdjoint);
}

TEST(WeylMatrix, LinearAndHermitianComplex) {
    const Lattice L = hexagonal_lattice(vec({0.1, 0.3}));
    const auto a = FourierSymbol::trig(2, {{{1, 0}, cplx(0.5, 0.25)}, {{1, -1}, cplx(0, 1)}}, false);
    const auto b = FourierSymbol::trig(2, {{{0, 1}, cplx(2.0, 0)}, {{1, 0}, cplx(-1.0, 0.5)}}, false);
    std::vector<std::pair<IntVec, cplx>> sum;
    for (const auto* s : {&a, &b})
        for (const auto& [k, c] : s->terms()) sum.emplace_back(k, *c.constant);
    const auto ab = FourierSymbol::trig(2, sum, false);
    const auto box = std::make_shared<const IndexSet>(rectangle({-4, -4}, {4, 4}));
    const auto A = weyl_matrix<cplx>(L, a, box), B = weyl_matrix<cplx>(L, b, box), AB = weyl_matrix<cplx>(L, ab, box);
    EXPECT_LE((A.mat + B.mat - AB.mat).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE(A.hermitian_defect(), 1e-15);
    EXPECT_LE(AB.hermitian_defect(), 1e-15);
}

TEST(Trig, MirrorsMissingTerms) {
    const auto s = FourierSymbol::trig(2, {{{0, 1}, cplx(1.0, 2.0)}}, false);
    ASSERT_TRUE(s.has({0, -1}));
    EXPECT_EQ(s.coefficient({0, -1}, vec({0, 0})), cplx(1.0, -2.0));
    EXPECT_FALSE(s.real_matrix());
    EXPECT_TRUE(FourierSymbol::cosines(2, {{1, 0}, {0, 1}}).real_matrix());
}

TEST(Laplacian, Examples) {
    const Lattice L1 = euclidean_lattice(1, vec({0.3}));
    const auto b1 = std::make_shared<const IndexSet>(1, std::vector<IntVec>{{5}});
    EXPECT_NEAR(laplacian_matrix<double>(L1, b1).mat(0, 0), 28.09, 1e-12);
    const Lattice H = hexagonal_lattice();
    const auto b2 = std::make_shared<const IndexSet>(2, std::vector<IntVec>{{1, 0}, {0, 0}});
    const auto M = laplacian_matrix<double>(H, b2).mat;
    EXPECT_NEAR(M(0, 0), 4.0 / 3.0, 1e-12);
    EXPECT_EQ(M(1, 1), 0.0);
}

TEST(Decompose, ReconstructsAtRandomPoints) {
    const Lattice L = hexagonal_lattice(vec({0.2, 0.45}));
    const Params p = Params::defaults(2);
    FourierSymbol a = FourierSymbol::cosines(2, {{1, 0}, {0, 1}, {1, -1}, {2, 1}}, 0.7);
    a.set({0, 0}, [](const Eigen::VectorXd& xi) { return cplx(1.0 / (1.0 + xi.squaredNorm())); });
    const auto D = decompose(L, a, p);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-200.0, 200.0);
    double worst = 0;
    for (int n = 0; n < 10000; ++n) {
        const Eigen::VectorXd xi = vec({u(rng), u(rng)});
        for (const auto& [k, c] : a.terms()) {
            const cplx total = D.average.coefficient(k, xi) + D.nonresonant.coefficient(k, xi) +
                               D.resonant.coefficient(k, xi) + D.smoothing.coefficient(k, xi);
            worst = std::max(worst, std::abs(total - c(xi)));
        }
    }
    EXPECT_LE(worst, 1e-14);
}

TEST(Decompose, ConstantPotential) {
    const Lattice L = euclidean_lattice(2);
    FourierSymbol a(2);
    a.set_constant({0, 0}, 3.5);
    const auto D = decompose(L, a, Params::defaults(2));
    EXPECT_EQ(D.average.coefficient({0, 0}, vec({4, 1})), cplx(3.5));
    EXPECT_TRUE(D.nonresonant.empty());
    EXPECT_TRUE(D.resonant.empty());
    EXPECT_TRUE(D.smoothing.empty());
}

TEST(Decompose, FarFromResonanceIsNonresonant) {
    const Lattice L = euclidean_lattice(1);
    const Params p = Params::defaults(1);
    const auto D = decompose(L, FourierSymbol::cosines(1, {{1}}), p);
    const Eigen::VectorXd xi = vec({50});
    EXPECT_EQ(D.resonant.coefficient({1}, xi), cplx(0));
    EXPECT_NEAR(D.nonresonant.coefficient({1}, xi).real(), smoothing_cutoff(L, p, {1}, xi), 1e-15);
}

TEST(Decompose, OrthogonalWavevectorExample) {
    const Lattice L = euclidean_lattice(2);
    const Params p = Params::defaults(2);
    const auto D = decompose(L, FourierSymbol::cosines(2, {{0, 1}}, 0.5), p);
    const Eigen::VectorXd xi = vec({10, 0});
    const double expected = cutoff(1.0 / std::pow(std::sqrt(101.0), 0.05));
    EXPECT_NEAR(D.resonant.coefficient({0, 1}, xi).real(), 0.5 * expected, 1e-15);
    EXPECT_GT(expected, 0.0);
    EXPECT_LT(expected, 1.0);
}

// Every nonzero element of the quantized resonant part sits on a resonance.
TEST(Decompose, ResonantSupportOnBox) {
    const Lattice L = hexagonal_lattice(vec({0.1, 0.0}));
    const Params p = Params::defaults(2);
    std::vector<IntVec> ks;
    detail::for_each_in_box({-2, -2}, {2, 2}, [&](const IntVec& k) {
        if (!is_zero(k) && (k[0] > 0 || (k[0] == 0 && k[1] > 0))) ks.push_back(k);
    });
    const auto D = decompose(L, FourierSymbol::cosines(2, ks), p);
    const auto box = std::make_shared<const IndexSet>(rectangle({-30, -30}, {30, 30}));
    const auto R = weyl_matrix<double>(L, D.resonant, box);
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < box->size(); ++j)
        for (std::size_t i = 0; i < box->size(); ++i) {
            if (R.mat(i, j) == 0.0) continue;
            ++nonzero;
            const IntVec k = sub((*box)[i], (*box)[j]);
            const Eigen::VectorXd y = 0.5 * (to_real((*box)[i]) + to_real((*box)[j])) + L.kappa;
            const double Y = L.bracket(y), nk = L.norm(k);
            EXPECT_LE(nk, std::pow(Y, p.eps));
            EXPECT_LE(std::abs(L.dot(y, to_real(k))), std::pow(Y, p.delta) * std::pow(nk, -p.tau));
        }
    EXPECT_GT(nonzero, 0u);
}

TEST(Average, Examples) {
    EXPECT_EQ(average(FourierSymbol::cosines(1, {{1}}))(vec({3})), cplx(0));
    FourierSymbol c(1);
    c.set_constant({0}, 2.0);
    EXPECT_EQ(average(c)(vec({3})), cplx(2.0));
    FourierSymbol b(1);
    b.set({0}, [](const Eigen::VectorXd& xi) { return cplx(1.0 / std::sqrt(1.0 + xi[0] * xi[0])); });
    EXPECT_DOUBLE_EQ(average(b)(vec({3})).real(), 1.0 / std::sqrt(10.0));
}

TEST(Seminorm, Examples) {
    const Lattice L = euclidean_lattice(1);
    std::vector<Eigen::VectorXd> grid;
    for (int i = -50; i <= 50; ++i) grid.push_back(vec({0.5 * i}));
    FourierSymbol c(1);
    c.set_constant({0}, cplx(0, -3));
    EXPECT_NEAR(seminorm_estimate(L, c, 0, 0, 0, 0.5, grid), 3.0, 1e-14);
    FourierSymbol b(1);
    b.set({0}, [](const Eigen::VectorXd& xi) { return cplx(1.0 / std::sqrt(1.0 + xi[0] * xi[0])); });
    EXPECT_NEAR(seminorm_estimate(L, b, 0, 0, -1, 0.5, grid), 1.0, 1e-12);

    const Lattice H = hexagonal_lattice();
    FourierSymbol e(2);
    e.set_constant({1, 2}, 1.0);
    std::vector<Eigen::VectorXd> g2{vec({0, 0}), vec({3, -1})};
    EXPECT_NEAR(seminorm_estimate(H, e, 1, 0, 0, 0.5, g2), H.norm(IntVec{1, 2}), 1e-12);
}
