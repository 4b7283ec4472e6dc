#include <torus_spectra/submodules.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace torus_spectra;

namespace {

long gcd_all(const IntVec& v) {
    long g = 0;
    for (long x : v) g = std::gcd(g, std::labs(x));
    return g;
}

// primitive generator of the saturation of a single vector, sign-normalised
IntVec primitive(IntVec v) {
    const long g = gcd_all(v);
    for (auto& x : v) x /= g;
    for (long x : v) {
        if (x == 0) continue;
        if (x < 0)
            for (auto& y : v) y = -y;
        break;
    }
    return v;
}

}  // namespace

TEST(Submodules, SaturateExamples) {
    EXPECT_EQ(saturate({IntVec{2, 0}}, 2).basis(), (std::vector<IntVec>{{1, 0}}));
    EXPECT_EQ(saturate({IntVec{1, 1}}, 2).basis(), (std::vector<IntVec>{{1, 1}}));
    auto F = saturate({IntVec{2, 0}, IntVec{0, 2}}, 2);
    EXPECT_EQ(F.rank(), 2);
    EXPECT_EQ(F, Submodule::full(2));
    EXPECT_EQ(saturate({}, 3).rank(), 0);
}

TEST(Submodules, SaturateRankOneMatchesGcdOracle) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<long> u(-12, 12);
    for (int t = 0; t < 300; ++t) {
        IntVec v{u(rng), u(rng), u(rng)};
        if (is_zero(v)) continue;
        auto M = saturate({v}, 3);
        ASSERT_EQ(M.rank(), 1);
        EXPECT_EQ(M.basis()[0], primitive(v));
    }
}

TEST(Submodules, SaturationProperties) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<long> u(-6, 6);
    for (int t = 0; t < 300; ++t) {
        std::vector<IntVec> gens{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
        auto M = saturate(gens, 3);
        EXPECT_EQ(M.rank(), rank_of(gens, 3));
        for (const auto& g : gens) EXPECT_TRUE(M.contains(g));
        EXPECT_EQ(saturate(M.basis(), 3), M);
        EXPECT_EQ(determinant(M.adapted()), 1);
        // saturated: a vector of the span whose multiple is in M is itself in M
        if (M.rank() >= 1) {
            IntVec w = add(M.basis()[0], M.basis().back());
            EXPECT_TRUE(M.contains(w));
        }
    }
}

TEST(Submodules, AdaptedBasisExamples) {
    EXPECT_EQ(adapted_basis({IntVec{1, 0}}, 2), (std::vector<IntVec>{{0, 1}}));
    EXPECT_EQ(adapted_basis({IntVec{2, 1}}, 2), (std::vector<IntVec>{{1, 1}}));
    EXPECT_EQ(determinant({IntVec{2, 1}, IntVec{1, 1}}), 1);
    EXPECT_TRUE(adapted_basis({IntVec{1, 0}, IntVec{0, 1}}, 2).empty());
    EXPECT_THROW(adapted_basis({IntVec{2, 0}}, 2), NotSaturated);
}

TEST(Submodules, CoordinatesAndBeta) {
    auto M = saturate({IntVec{0, 1}}, 2);
    EXPECT_EQ(M.beta(IntVec{10, 0}), (IntVec{10, 0}));
    EXPECT_EQ(M.beta(IntVec{10, 7}), (IntVec{10, 0}));
    for (long a = -5; a <= 5; ++a)
        for (long b = -5; b <= 5; ++b) {
            IntVec xi{a, b};
            EXPECT_EQ(M.from_coordinates(M.coordinates(xi)), xi);
        }
    EXPECT_TRUE(M.contains(IntVec{0, -3}));
    EXPECT_FALSE(M.contains(IntVec{1, -3}));
    EXPECT_TRUE(M.is_subset_of(Submodule::full(2)));
    EXPECT_FALSE(Submodule::full(2).is_subset_of(M));
}

TEST(Submodules, ProjectionEuclidean) {
    auto L = euclidean_lattice(2);
    auto M = saturate({IntVec{1, 0}}, 2);
    Eigen::VectorXd w(2);
    w << 3.3, 2.2;
    auto p = project(L, w, M);
    EXPECT_NEAR(p.along[0], 3.3, 1e-14);
    EXPECT_NEAR(p.along[1], 0.0, 1e-14);
    EXPECT_NEAR(p.orthogonal[1], 2.2, 1e-14);
    Eigen::VectorXd inM(2);
    inM << -4.0, 0.0;
    EXPECT_LE(project(L, inM, M).orthogonal.norm(), 1e-14);
}

TEST(Submodules, ProjectionHexagonalNormalEquations) {
    auto L = hexagonal_lattice();
    auto M = saturate({IntVec{1, 0}}, 2);
    Eigen::VectorXd w(2);
    w << 0.0, 1.0;
    auto p = project(L, w, M);
    const Eigen::VectorXd u = to_real(IntVec{1, 0});
    const Eigen::VectorXd expect = (L.dot(w, u) / L.dot(u, u)) * u;
    EXPECT_LE((p.along - expect).norm(), 1e-14);
    EXPECT_NEAR(L.dot(p.orthogonal, u), 0.0, 1e-14);
}

TEST(Submodules, FloquetSplitExamples) {
    auto L = euclidean_lattice(2);
    auto M = saturate({IntVec{1, 0}}, 2);
    auto f = floquet_split(L, IntVec{3, 2}, M);
    EXPECT_EQ(f.zeta, (IntVec{3, 0}));
    EXPECT_EQ(f.xi_tilde, (IntVec{0, 2}));
    EXPECT_NEAR(f.kappa_prime.norm(), 0.0, 1e-15);
    EXPECT_NEAR(f.ell2, 4.0, 1e-12);

    Eigen::VectorXd kap(2);
    kap << 0.3, 0.2;
    auto Lk = euclidean_lattice(2, kap);
    auto g = floquet_split(Lk, IntVec{3, 2}, M);
    EXPECT_EQ(g.zeta, (IntVec{3, 0}));
    EXPECT_EQ(g.xi_tilde, (IntVec{0, 2}));
    EXPECT_NEAR(g.kappa_prime[0], 0.3, 1e-12);
    EXPECT_NEAR(g.kappa_prime[1], 0.0, 1e-12);
    EXPECT_NEAR(g.ell2, 4.84, 1e-12);
    EXPECT_NEAR(3.3 * 3.3 + g.ell2, Lk.free_eigenvalue(IntVec{3, 2}), 1e-12);

    auto full = floquet_split(L, IntVec{4, -7}, Submodule::full(2));
    EXPECT_NEAR(full.ell2, 0.0, 1e-12);
    EXPECT_EQ(full.xi_tilde, (IntVec{0, 0}));
}

TEST(Submodules, FloquetSplitIdentityAndClassConstancy) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    std::uniform_int_distribution<long> ui(-9, 9), us(-3, 3);
    auto H = hexagonal_lattice();
    for (int t = 0; t < 1000; ++t) {
        Eigen::VectorXd kap(2);
        kap << ur(rng), ur(rng);
        Lattice L = (t % 2) ? euclidean_lattice(2, kap) : hexagonal_lattice(kap);
        IntVec gen{us(rng), us(rng)};
        if (is_zero(gen)) continue;
        auto M = saturate({gen}, 2);
        IntVec xi{ui(rng), ui(rng)};
        auto f = floquet_split(L, xi, M);
        const Eigen::VectorXd zk = to_real(f.zeta) + f.kappa_prime;
        EXPECT_NEAR(L.norm2(zk) + f.ell2, L.free_eigenvalue(xi), 1e-10);
        for (int j = 0; j < 10; ++j) {
            IntVec shifted = add(xi, M.from_module_coordinates(IntVec{us(rng)}));
            auto g = floquet_split(L, shifted, M);
            EXPECT_EQ(g.xi_tilde, f.xi_tilde);
            EXPECT_LE((g.kappa_prime - f.kappa_prime).norm(), 1e-10);
            EXPECT_NEAR(g.ell2, f.ell2, 1e-9);
        }
    }
}
