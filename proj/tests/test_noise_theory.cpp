#include "sdlab/noise_theory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace sdlab;

namespace {

GramModel four_class() {
    GramModel m;
    m.kind = GramCase::III;
    m.K = 4;
    m.n = 100;
    m.c = 0.4;
    m.d = 0.1;
    return m;
}

constexpr double kLambdaFour = 3.125e-4;

CorruptionMatrix symmetric(double eta, int K = 4) { return make_corruption(CorruptionKind::Symmetric, eta, K); }

// random doubly stochastic matrix with a dominant diagonal, via a mix of permutations
CorruptionMatrix random_corruption(std::mt19937_64& rng, int K) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> perm(K);
    Matrix M = Matrix::Zero(K, K);
    double total = 0.0;
    for (int r = 0; r < 4; ++r) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        double w = u(rng);
        for (int k = 0; k < K; ++k) M(k, perm[k]) += w;
        total += w;
    }
    double wid = u(rng) * 3.0;
    M += wid * Matrix::Identity(K, K);
    return CorruptionMatrix(M / (total + wid));
}

} // namespace

TEST(MakeCorruption, SymmetricTable) {
    auto C = symmetric(0.5);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(C(k, j), k == j ? 0.5 : 1.0 / 6.0, 1e-15);
}

TEST(MakeCorruption, ZeroRateIsIdentity) {
    SuperclassMap g({0, 0, 1, 1});
    for (auto kind : {CorruptionKind::Symmetric, CorruptionKind::Asymmetric, CorruptionKind::Superclass})
        EXPECT_EQ(make_corruption(kind, 0.0, 4, g).entries, Matrix::Identity(4, 4));
}

TEST(MakeCorruption, AsymmetricSuccessor) {
    auto C = make_corruption(CorruptionKind::Asymmetric, 0.4, 4);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) {
            double want = j == k ? 0.6 : (j == (k + 1) % 4 ? 0.2 : 0.1);
            EXPECT_NEAR(C(k, j), want, 1e-15);
        }
    EXPECT_LT((C.entries.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(MakeCorruption, SuperclassRejectsSingleton) {
    EXPECT_THROW(make_corruption(CorruptionKind::Superclass, 0.2, 3, SuperclassMap({0, 0, 1})), ValidationError);
    EXPECT_NO_THROW(make_corruption(CorruptionKind::Superclass, 0.0, 3, SuperclassMap({0, 0, 1})));
}

TEST(MakeCorruption, ExplicitValidationNamesIndex) {
    Matrix M(2, 2);
    M << 0.7, 0.3, 0.2, 0.8;
    try {
        CorruptionMatrix C(M);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos) << e.what();
    }
}

TEST(RealizeLabels, IdentityKeepsLabels) {
    auto la = realize_labels(CorruptionMatrix(Matrix::Identity(3, 3)), 7, 5);
    EXPECT_EQ(la.true_labels, la.given_labels);
}

TEST(RealizeLabels, SymmetricSixPerClass) {
    auto la = realize_labels(symmetric(0.5), 6, 1);
    Matrix counts = Matrix::Zero(4, 4);
    for (int i = 0; i < la.size(); ++i) counts(la.true_labels[i], la.given_labels[i]) += 1;
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) EXPECT_EQ(counts(k, j), k == j ? 3 : 1);
    EXPECT_LT(max_abs(la.empirical() - symmetric(0.5).entries), 1e-15);
}

TEST(RealizeLabels, InfeasibleNamesEntryAndMinimalN) {
    try {
        realize_labels(symmetric(0.5), 5, 0);
        FAIL();
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("(1,2)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("n is 6"), std::string::npos) << msg;
    }
}

TEST(RealizeLabels, SeedDeterministic) {
    auto a = realize_labels(symmetric(0.5), 12, 9), b = realize_labels(symmetric(0.5), 12, 9);
    EXPECT_EQ(a.given_labels, b.given_labels);
    EXPECT_NE(realize_labels(symmetric(0.5), 12, 10).given_labels, a.given_labels);
}

TEST(ApportionLabels, RowsKeepClassCounts) {
    auto la = apportion_labels(symmetric(0.5), 50, 3);
    ASSERT_EQ(la.size(), 200);
    Matrix E = la.empirical();
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(E.row(k).sum(), 1.0, 1e-12);
    EXPECT_LT(max_abs(E - symmetric(0.5).entries), 1.0 / 50 + 1e-12);
}

TEST(TheoryConstants, FourClass) {
    auto tc = theory_constants(four_class(), kLambdaFour);
    EXPECT_NEAR(tc.L(), 0.5, 1e-15);
    EXPECT_NEAR(tc.p, 6.0 / 11.0, 1e-15);
    EXPECT_NEAR(tc.q, 30.6 / 31.1, 1e-15);
    ASSERT_EQ(tc.r.size(), 1);
    EXPECT_NEAR(tc.r(0), 70.6 / 71.1, 1e-15);
    EXPECT_NEAR(tc.q / tc.p, 1.803858, 1e-6);
    EXPECT_LT(tc.p, tc.q);
    EXPECT_LT(tc.q, tc.r(0));
    EXPECT_LT(tc.r(0), 1.0);
}

TEST(TheoryConstants, EqualCorrelationsCollapse) {
    GramModel m = four_class();
    m.d = m.c;
    auto tc = theory_constants(m, kLambdaFour);
    EXPECT_DOUBLE_EQ(tc.q, tc.p);
    m.d = 0.5;
    EXPECT_THROW(theory_constants(m, kLambdaFour), ValidationError);
}

TEST(TheoryConstants, CaseFiveWithoutCrossRecoversSuperclassTerm) {
    GramModel m = four_class();
    m.kind = GramCase::V;
    m.superclasses = SuperclassMap({0, 0, 0, 1});
    m.e = 0.0;
    auto tc = theory_constants(m, 1e-3);
    ASSERT_TRUE(tc.extended);
    const double L = tc.L();
    for (int t = 1; t <= 5; ++t) {
        EXPECT_NEAR(tc.extended->nu(t), 0.0, 1e-14);
        Vector mu = tc.extended->mu(t);
        for (int s = 0; s < 2; ++s) {
            double Ks = s == 0 ? 3 : 1;
            double lam = 1 - m.c + m.n * (m.c - m.d) + Ks * m.n * m.d;
            double r = lam / (L + lam);
            EXPECT_NEAR(mu(s), std::pow(r, t) - std::pow(tc.q, t), 1e-12) << "t=" << t << " s=" << s;
        }
    }
}

TEST(SdCondition, IdentityHoldsOnceThresholdBelowOne) {
    auto tc = theory_constants(four_class(), 1e-3);
    ASSERT_LT(tc.threshold(0, 1), 1.0);
    CorruptionMatrix I(Matrix::Identity(4, 4));
    for (int t = 1; t <= 5; ++t) EXPECT_TRUE(sd_accuracy_condition(I, tc, t).achieves_100);
    auto a = theory_constants(four_class(), kLambdaFour);
    EXPECT_FALSE(sd_accuracy_condition(I, a, 1).achieves_100);
    EXPECT_TRUE(sd_accuracy_condition(I, a, 2).achieves_100);
}

TEST(SdCondition, FourClassHalfNoise) {
    auto tc = theory_constants(four_class(), kLambdaFour);
    auto C = symmetric(0.5);
    auto r1 = sd_accuracy_condition(C, tc, 1);
    EXPECT_FALSE(r1.achieves_100);
    EXPECT_EQ(r1.failing_pairs.size(), 12u);
    EXPECT_NEAR(tc.threshold(0, 1), 1.244, 1e-4);
    EXPECT_TRUE(sd_accuracy_condition(C, tc, 3).achieves_100);
    EXPECT_NEAR(tc.threshold(0, 3), 0.2053, 1e-4);
}

TEST(MinimalRounds, Examples) {
    auto tc = theory_constants(four_class(), kLambdaFour);
    EXPECT_EQ(minimal_rounds(symmetric(0.5), tc), 3);
    EXPECT_EQ(minimal_rounds(CorruptionMatrix(Matrix::Identity(4, 4)), theory_constants(four_class(), 1e-3)), 1);
    Matrix M(2, 2);
    M << 0.5, 0.5, 0.5, 0.5;
    GramModel m2 = four_class();
    m2.K = 2;
    EXPECT_EQ(minimal_rounds(CorruptionMatrix(M), theory_constants(m2, kLambdaFour)), std::nullopt);
}

TEST(MinimalRounds, RejectsRatioAtMostOne) {
    GramModel m = four_class();
    m.d = m.c;
    EXPECT_THROW(minimal_rounds(symmetric(0.5), theory_constants(m, kLambdaFour)), ValidationError);
}

TEST(MinimalRounds, BoundaryByReevaluation) {
    std::mt19937_64 rng(21);
    auto tc = theory_constants(four_class(), kLambdaFour);
    for (int trial = 0; trial < 200; ++trial) {
        auto C = random_corruption(rng, 4);
        auto t = minimal_rounds(C, tc);
        if (!t) {
            EXPECT_FALSE(pll_accuracy_condition(C).achieves_100);
            continue;
        }
        EXPECT_TRUE(sd_accuracy_condition(C, tc, *t).achieves_100);
        if (*t > 1) {
            EXPECT_FALSE(sd_accuracy_condition(C, tc, *t - 1).achieves_100);
        }
    }
}

TEST(MinimalRounds, ExactBoundaryCountsAsFailure) {
    // gap placed exactly on the t=2 threshold
    auto tc = theory_constants(four_class(), kLambdaFour);
    double thr = tc.threshold(0, 2);
    double off = (1.0 - thr) / 4.0;
    Matrix M = Matrix::Constant(4, 4, off);
    M.diagonal().setConstant(off + thr);
    CorruptionMatrix C(M);
    EXPECT_FALSE(sd_accuracy_condition(C, tc, 2).achieves_100);
    EXPECT_EQ(minimal_rounds(C, tc), 3);
}

TEST(PllCondition, Examples) {
    EXPECT_TRUE(pll_accuracy_condition(symmetric(0.5)).achieves_100);
    EXPECT_FALSE(pll_accuracy_condition(symmetric(0.76)).achieves_100);
    EXPECT_TRUE(pll_accuracy_condition(CorruptionMatrix(Matrix::Identity(4, 4))).achieves_100);
}

TEST(Conditions, MonotoneInRoundsAndDominatedByPll) {
    std::mt19937_64 rng(4);
    auto tc = theory_constants(four_class(), kLambdaFour);
    for (int trial = 0; trial < 200; ++trial) {
        auto C = random_corruption(rng, 4);
        bool pll = pll_accuracy_condition(C).achieves_100;
        bool seen = false;
        for (int t = 1; t <= 10; ++t) {
            bool sd = sd_accuracy_condition(C, tc, t).achieves_100;
            if (seen) {
                EXPECT_TRUE(sd);
            }
            seen = seen || sd;
            if (!pll) {
                EXPECT_FALSE(sd);
            }
        }
    }
}

TEST(Conditions, RejectCrossSuperclassNoise) {
    GramModel m = four_class();
    m.kind = GramCase::IV;
    m.superclasses = SuperclassMap({0, 0, 1, 1});
    auto tc = theory_constants(m, kLambdaFour);
    EXPECT_THROW(sd_accuracy_condition(symmetric(0.3), tc, 1), ValidationError);
    auto C = make_corruption(CorruptionKind::Superclass, 0.3, 4, m.superclasses);
    EXPECT_NO_THROW(sd_accuracy_condition(C, tc, 1));
}

TEST(EvolvingCondition, ConstantScheduleMatches) {
    std::mt19937_64 rng(8);
    GramModel m = four_class();
    auto tc = theory_constants(m, kLambdaFour);
    for (int trial = 0; trial < 40; ++trial) {
        auto C = random_corruption(rng, 4);
        std::vector<std::pair<double, double>> sched(6, {m.c, m.d});
        for (int t = 1; t <= 6; ++t)
            EXPECT_EQ(evolving_condition(C, sched, kLambdaFour, 4, 100, t), sd_accuracy_condition(C, tc, t).achieves_100);
    }
}

TEST(EvolvingCondition, RisingCorrelationHelps) {
    GramModel m = four_class();
    auto tc = theory_constants(m, kLambdaFour);
    GramModel m5 = m;
    m5.c = 0.5;
    auto tc5 = theory_constants(m5, kLambdaFour);
    // product of per-round ratios, recomputed from the constants directly
    double prod = (tc.q / tc.p) * (tc5.q / tc5.p);
    EXPECT_GT(prod, std::pow(tc.q / tc.p, 2));
    auto C = symmetric(0.5);
    bool want = 0.5 - 1.0 / 6.0 > 1.0 / (prod - 1.0) + kTieTol;
    EXPECT_EQ(evolving_condition(C, {{0.4, 0.1}, {0.5, 0.1}}, kLambdaFour, 4, 100, 2), want);
    EXPECT_THROW(evolving_condition(C, {{0.4, 0.1}}, kLambdaFour, 4, 100, 2), ValidationError);
}

TEST(EvolvingCondition, SingleEntryIsRoundOne) {
    auto tc = theory_constants(four_class(), kLambdaFour);
    for (double eta : {0.0, 0.2, 0.5, 0.7})
        EXPECT_EQ(evolving_condition(symmetric(eta), {{0.4, 0.1}}, kLambdaFour, 4, 100, 1),
                  sd_accuracy_condition(symmetric(eta), tc, 1).achieves_100);
}
