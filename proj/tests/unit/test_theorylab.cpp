#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "platont/errors.hpp"
#include "platont/rng.hpp"
#include "platont/theorylab.hpp"

using namespace platont;

TEST_CASE("symmetric_eigen") {
    SUBCASE("diagonal matrix returns sorted diagonal") {
        Mat m(3, 3);
        m(0, 0) = 1.0;
        m(1, 1) = 5.0;
        m(2, 2) = -2.0;
        EigenResult eig = symmetric_eigen(m);
        CHECK(eig.values[0] == doctest::Approx(5.0));
        CHECK(eig.values[1] == doctest::Approx(1.0));
        CHECK(eig.values[2] == doctest::Approx(-2.0));
    }
    SUBCASE("hand 2x2 off-diagonal case") {
        Mat m(2, 2);
        m(0, 1) = -2.0;
        m(1, 0) = -2.0;
        EigenResult eig = symmetric_eigen(m);
        CHECK(eig.values[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(eig.values[1] == doctest::Approx(-2.0).epsilon(1e-12));
    }
    SUBCASE("random 50x50: orthonormality and reconstruction") {
        Rng rng(99);
        Mat m(50, 50);
        for (int i = 0; i < 50; ++i)
            for (int j = i; j < 50; ++j) {
                const double v = rng.uniform(-1.0, 1.0);
                m(i, j) = v;
                m(j, i) = v;
            }
        EigenResult eig = symmetric_eigen(m);
        const Mat vtv = matmul_tn(eig.vectors, eig.vectors);
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j)
                CHECK(std::abs(vtv(i, j) - (i == j ? 1.0 : 0.0)) < 1e-9);
        // V Lambda V^T == M
        Mat vl = eig.vectors;
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j) vl(i, j) *= eig.values[j];
        const Mat rec = matmul_nt(vl, eig.vectors);
        double err = 0.0;
        for (std::size_t k = 0; k < rec.a.size(); ++k) {
            const double d = rec.a[k] - m.a[k];
            err += d * d;
        }
        CHECK(std::sqrt(err) < 1e-9 * frobenius(m));
    }
    SUBCASE("asymmetric input rejected") {
        Mat m(2, 2);
        m(0, 1) = 1.0;
        m(1, 0) = 0.5;
        CHECK_THROWS_AS(symmetric_eigen(m), ValidationError);
    }
    SUBCASE("zero matrix") {
        EigenResult eig = symmetric_eigen(Mat(4, 4));
        for (double v : eig.values) CHECK(v == 0.0);
    }
}

TEST_CASE("pmi_from_counts") {
    SUBCASE("uniform counts are independent: PMI near zero") {
        const double cell = 1e6;
        Mat counts(2, 2, cell);
        PmiMatrix pm = pmi_from_counts(counts);
        for (double v : pm.k.a) CHECK(std::abs(v) < 1e-6);
    }
    SUBCASE("diagonal concentration: positive diagonal, negative off-diagonal") {
        Mat counts(3, 3);
        for (int i = 0; i < 3; ++i) counts(i, i) = 100.0;
        PmiMatrix pm = pmi_from_counts(counts);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                if (i == j)
                    CHECK(pm.k(i, j) > 0.0);
                else
                    CHECK(pm.k(i, j) < 0.0);
            }
    }
    SUBCASE("hand-computed 2x2 table with smoothing") {
        Mat counts(2, 2);
        counts(0, 0) = 10.0;
        counts(1, 1) = 10.0;
        PmiMatrix pm = pmi_from_counts(counts);
        // smoothed joint: {11,1;1,11}/24, marginals 1/2 each
        CHECK(pm.k(0, 0) == doctest::Approx(std::log((11.0 / 24.0) / 0.25)).epsilon(1e-12));
        CHECK(pm.k(0, 1) == doctest::Approx(std::log((1.0 / 24.0) / 0.25)).epsilon(1e-12));
    }
    SUBCASE("all-zero counts rejected") {
        CHECK_THROWS_AS(pmi_from_counts(Mat(3, 3)), std::invalid_argument);
    }
}

TEST_CASE("theorem1_shift") {
    SUBCASE("mildly negative off-diagonals need no shift") {
        PmiMatrix pm;
        pm.k = Mat(2, 2);
        pm.k(0, 0) = pm.k(1, 1) = 1.0;
        pm.k(0, 1) = pm.k(1, 0) = -0.5;
        pm.rho_min = std::exp(-0.5);
        pm.eps = 0.0;
        Theorem1Report rep = theorem1_shift(pm);
        CHECK(rep.c_bound == 0.0); // max(0, 0.5 - 1)
        CHECK(rep.min_eig == doctest::Approx(0.5));
        CHECK(rep.min_eig_shifted >= -1e-8);
    }
    SUBCASE("zero diagonal with strong off-diagonal needs shift 2") {
        PmiMatrix pm;
        pm.k = Mat(2, 2);
        pm.k(0, 1) = pm.k(1, 0) = -2.0;
        pm.rho_min = std::exp(-2.0);
        pm.eps = 0.0;
        Theorem1Report rep = theorem1_shift(pm);
        CHECK(rep.c_bound == doctest::Approx(2.0));
        CHECK(rep.min_eig == doctest::Approx(-2.0));
        CHECK(rep.min_eig_shifted == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("zero matrix is PSD with zero bound") {
        PmiMatrix pm;
        pm.k = Mat(3, 3);
        Theorem1Report rep = theorem1_shift(pm);
        CHECK(rep.c_bound == 0.0);
        CHECK(rep.min_eig >= -1e-12);
    }
}

TEST_CASE("build_a1a2_instance") {
    SUBCASE("membership in the construction intervals") {
        const PmiMatrix pm = build_a1a2_instance(6, 0.4, 2.0, 77);
        const double lr = std::log(0.4);
        for (int i = 0; i < 6; ++i) {
            CHECK(pm.k(i, i) >= 6 * 2.0 + lr - 1e-12);
            CHECK(pm.k(i, i) <= 6 * 2.0 + lr + 1.0 + 1e-12);
            for (int j = 0; j < 6; ++j)
                if (i != j) {
                    CHECK(pm.k(i, j) >= lr - 1e-12);
                    CHECK(pm.k(i, j) <= lr + 2.0 + 1e-12);
                }
        }
        const Theorem1Report rep = theorem1_shift(pm);
        CHECK(rep.a1_holds);
        CHECK(rep.a2_holds);
    }
    SUBCASE("with eps = N |log rho| the kernel itself is PSD (1000 seeds)") {
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            Rng rng(seed);
            const int n = static_cast<int>(rng.uniform_int(2, 16));
            const double rho = rng.uniform(0.2, 0.95);
            const double eps = n * std::abs(std::log(rho));
            const PmiMatrix pm = build_a1a2_instance(n, rho, eps, seed);
            const Theorem1Report rep = theorem1_shift(pm);
            REQUIRE(rep.part2_precondition);
            REQUIRE(rep.min_eig >= -1e-8);
        }
    }
    SUBCASE("failing part-II precondition still certifies the shifted kernel") {
        const PmiMatrix pm = build_a1a2_instance(5, std::exp(-1.0), 0.0, 3);
        const Theorem1Report rep = theorem1_shift(pm);
        CHECK_FALSE(rep.part2_precondition); // eps = 0 < 5
        CHECK(rep.min_eig_shifted >= -1e-8);
    }
}

TEST_CASE("proposition1_check") {
    SUBCASE("identical gradients: equality at r = 1") {
        const int p = 10, m = 4;
        Rng rng(5);
        std::vector<double> g(p);
        for (double& v : g) v = rng.gaussian();
        GradientBundle b;
        b.gradients = Mat(p, m);
        for (int c = 0; c < m; ++c)
            for (int i = 0; i < p; ++i) b.gradients(i, c) = g[i];
        b.lambda.assign(m, 1.0);
        const Prop1Report rep = proposition1_check(b);
        CHECK(rep.r == 1);
        CHECK(rep.eps_s1 == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(rep.delta == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(rep.lhs == doctest::Approx(rep.rhs).epsilon(1e-9));
        CHECK(rep.holds);
    }
    SUBCASE("orthogonal equal-norm gradients: equality at r = m") {
        const int m = 4, p = 8;
        GradientBundle b;
        b.gradients = Mat(p, m);
        for (int c = 0; c < m; ++c) b.gradients(c, c) = 3.0;
        b.lambda.assign(m, 1.0);
        const Prop1Report rep = proposition1_check(b);
        CHECK(rep.r == m);
        CHECK(rep.delta == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(rep.lhs == doctest::Approx(rep.rhs).epsilon(1e-9));
        CHECK(rep.holds);
    }
    SUBCASE("zero bundle rejected") {
        GradientBundle b;
        b.gradients = Mat(4, 2);
        b.lambda = {1.0, 1.0};
        CHECK_THROWS_AS(proposition1_check(b), std::invalid_argument);
    }
    SUBCASE("planted low-rank sweep holds") {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            Rng rng(seed);
            const int p = 12, m = 4, r0 = 2;
            Mat basis(p, r0);
            for (double& v : basis.a) v = rng.gaussian();
            GradientBundle b;
            b.gradients = Mat(p, m);
            for (int c = 0; c < m; ++c) {
                std::vector<double> coef(r0);
                for (double& v : coef) v = rng.uniform(-1.0, 1.0);
                for (int i = 0; i < p; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < r0; ++j) s += basis(i, j) * coef[j];
                    b.gradients(i, c) = s + 0.005 * rng.gaussian();
                }
            }
            b.lambda.assign(m, 0.5);
            const Prop1Report rep = proposition1_check(b);
            REQUIRE(rep.holds);
        }
    }
}

TEST_CASE("pmi_feature_map factorizes the shifted kernel") {
    const PmiMatrix pm = build_a1a2_instance(5, 0.5, 10.0, 21);
    const Theorem1Report rep = theorem1_shift(pm);
    const Mat f = pmi_feature_map(pm, rep.c_bound);
    const Mat gram = matmul_nt(f, f);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(gram(i, j) ==
                  doctest::Approx(pm.k(i, j) + (i == j ? rep.c_bound : 0.0)).epsilon(1e-7));
}
