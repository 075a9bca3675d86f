#include "sdlab/gram_models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace sdlab;

namespace {

GramModel model(GramCase kind, int K, int n, double c, double d, double e = 0.0,
                std::vector<int> sc = {}) {
    GramModel m;
    m.kind = kind;
    m.K = K;
    m.n = n;
    m.c = c;
    m.d = kind == GramCase::I ? 0.0 : d;
    m.e = kind == GramCase::V ? e : 0.0;
    if (!sc.empty() && (kind == GramCase::IV || kind == GramCase::V)) m.superclasses = SuperclassMap(sc);
    if (kind == GramCase::II)
        for (int k = 0; k < K; ++k) m.omega.push_back(0.2 + 0.1 * k);
    return m;
}

void expect_multiset(const Vector& got, std::vector<std::pair<double, int>> want, double tol) {
    int idx = 0;
    for (auto [v, mult] : want)
        for (int i = 0; i < mult; ++i, ++idx) EXPECT_NEAR(got(idx), v, tol) << "index " << idx;
    EXPECT_EQ(idx, got.size());
}

} // namespace

TEST(BuildGram, CaseThreeSmallByHand) {
    Matrix want(4, 4);
    want << 1, 0.4, 0.1, 0.1, 0.4, 1, 0.1, 0.1, 0.1, 0.1, 1, 0.4, 0.1, 0.1, 0.4, 1;
    EXPECT_EQ(build_gram(model(GramCase::III, 2, 2, 0.4, 0.1)), want);
}

TEST(BuildGram, CaseOneZeroIsIdentity) {
    Matrix G = build_gram(model(GramCase::I, 3, 4, 0.0, 0.0));
    EXPECT_EQ(G, Matrix::Identity(12, 12));
}

TEST(BuildGram, CaseFourNeedsSuperclasses) {
    EXPECT_THROW(build_gram(model(GramCase::IV, 4, 2, 0.4, 0.1)), ValidationError);
}

TEST(BuildGram, RejectsBadOrdering) {
    EXPECT_THROW(build_gram(model(GramCase::III, 2, 2, 0.1, 0.4)), ValidationError);
    EXPECT_THROW(SuperclassMap({1, 0, 0}), ValidationError);
    EXPECT_THROW(SuperclassMap({0, 2}), ValidationError);
}

TEST(BuildGram, PerturbationBoundedSymmetricReproducible) {
    GramModel m = model(GramCase::III, 3, 5, 0.4, 0.1);
    Matrix clean = build_gram(m);
    m.perturbation = 0.05;
    m.seed = 11;
    Matrix a = build_gram(m), b = build_gram(m);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, a.transpose());
    EXPECT_LE(max_abs(a - clean), 0.05);
    EXPECT_EQ(a.diagonal(), Vector::Ones(15));
    m.seed = 12;
    EXPECT_NE(build_gram(m), a);
}

TEST(AnalyticEigen, CaseFourSetupValues) {
    auto es = analytic_eigensystem(model(GramCase::IV, 4, 100, 0.4, 0.1, 0.0, {0, 0, 1, 1}));
    expect_multiset(es.values, {{50.6, 2}, {30.6, 2}, {0.6, 396}}, 1e-10);
}

TEST(AnalyticEigen, CaseThreeSetupValues) {
    auto es = analytic_eigensystem(model(GramCase::III, 4, 100, 0.4, 0.1));
    expect_multiset(es.values, {{70.6, 1}, {30.6, 3}, {0.6, 396}}, 1e-10);
}

TEST(AnalyticEigen, CaseOneZeroAllOnes) {
    auto es = analytic_eigensystem(model(GramCase::I, 3, 4, 0.0, 0.0));
    EXPECT_LT((es.values.array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(AnalyticEigen, CaseFiveWithoutCrossMatchesCaseFour) {
    auto a = analytic_eigensystem(model(GramCase::IV, 4, 6, 0.4, 0.1, 0.0, {0, 0, 1, 1}));
    auto b = analytic_eigensystem(model(GramCase::V, 4, 6, 0.4, 0.1, 0.0, {0, 0, 1, 1}));
    EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AnalyticEigen, EigenGapCaseFour) {
    GramModel m = model(GramCase::IV, 6, 7, 0.5, 0.2, 0.0, {0, 0, 0, 1, 1, 2});
    auto es = analytic_eigensystem(m);
    EXPECT_NEAR(es.values(5) - es.values(6), m.n * (m.c - m.d), 1e-12);
}

TEST(AnalyticEigen, RejectsPerturbed) {
    GramModel m = model(GramCase::III, 2, 3, 0.4, 0.1);
    m.perturbation = 0.01;
    EXPECT_THROW(analytic_eigensystem(m), ValidationError);
}

TEST(AnalyticEigen, OrthonormalAndReconstructs) {
    for (GramCase kind : {GramCase::I, GramCase::II, GramCase::III, GramCase::IV, GramCase::V}) {
        GramModel m = model(kind, 4, 5, 0.5, 0.2, 0.05, {0, 0, 1, 1});
        auto es = analytic_eigensystem(m);
        Matrix G = build_gram(m);
        Matrix VtV = es.vectors.transpose() * es.vectors;
        EXPECT_LT(max_abs(VtV - Matrix::Identity(20, 20)), 1e-10) << case_name(kind);
        EXPECT_LT(max_abs(es.reconstruct() - G), 1e-8) << case_name(kind);
        for (int i = 1; i < es.size(); ++i) EXPECT_GE(es.values(i - 1), es.values(i));
    }
}

TEST(NumericEigen, TwoByTwo) {
    Matrix A(2, 2);
    A << 1, 0.4, 0.4, 1;
    auto es = numeric_eigensystem(A);
    EXPECT_NEAR(es.values(0), 1.4, 1e-14);
    EXPECT_NEAR(es.values(1), 0.6, 1e-14);
}

TEST(NumericEigen, DiagonalGivesBasis) {
    Matrix A = Vector::LinSpaced(3, 1, 3).asDiagonal();
    auto es = numeric_eigensystem(A);
    EXPECT_EQ(es.values, (Vector(3) << 3, 2, 1).finished());
    Matrix P(3, 3);
    P << 0, 0, 1, 0, 1, 0, 1, 0, 0;
    EXPECT_LT(max_abs(es.vectors.cwiseAbs() - P), 1e-14);
}

TEST(NumericEigen, RejectsAsymmetric) {
    Matrix A(2, 2);
    A << 1, 0.4, 0.3, 1;
    EXPECT_THROW(numeric_eigensystem(A), ValidationError);
}

TEST(NumericEigen, ResidualBound) {
    GramModel m = model(GramCase::III, 3, 4, 0.4, 0.1);
    m.perturbation = 0.05;
    m.seed = 3;
    Matrix G = build_gram(m);
    auto es = numeric_eigensystem(G);
    const double bound = 1e-8 * G.cwiseAbs().rowwise().sum().maxCoeff();
    for (int i = 0; i < es.size(); ++i)
        EXPECT_LE((G * es.vectors.col(i) - es.values(i) * es.vectors.col(i)).cwiseAbs().maxCoeff(), bound);
}

TEST(NumericEigen, MatchesAnalyticCaseFour) {
    GramModel m = model(GramCase::IV, 4, 5, 0.4, 0.1, 0.0, {0, 0, 1, 1});
    auto a = analytic_eigensystem(m);
    auto b = numeric_eigensystem(build_gram(m));
    EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GramStatistics, IdenticalAndOrthogonal) {
    FeatureMatrix f;
    f.rows = Matrix::Zero(4, 2);
    f.rows(0, 0) = f.rows(1, 0) = 1.0;
    f.rows(2, 1) = f.rows(3, 1) = 1.0;
    f.labels = {0, 0, 1, 1};
    auto st = gram_statistics(f);
    ASSERT_TRUE(st.same_class);
    EXPECT_DOUBLE_EQ(st.same_class->mean, 1.0);
    EXPECT_DOUBLE_EQ(st.same_class->std, 0.0);
    ASSERT_TRUE(st.same_superclass);
    EXPECT_DOUBLE_EQ(st.same_superclass->mean, 0.0);
    EXPECT_DOUBLE_EQ(st.same_superclass->std, 0.0);
}

TEST(GramStatistics, SingletonClassesHaveNoSameClassStat) {
    FeatureMatrix f;
    f.rows = Matrix::Identity(3, 3);
    f.labels = {0, 1, 2};
    auto st = gram_statistics(f);
    EXPECT_FALSE(st.same_class);
    ASSERT_TRUE(st.same_superclass);
    EXPECT_EQ(st.same_superclass->pairs, 3u);
}

TEST(GramStatistics, AnglesByHand) {
    FeatureMatrix f;
    f.rows.resize(4, 2);
    int i = 0;
    for (double deg : {0.0, 10.0, 90.0, 100.0}) {
        double a = deg * std::numbers::pi / 180.0;
        f.rows(i, 0) = std::cos(a);
        f.rows(i++, 1) = std::sin(a);
    }
    f.labels = {0, 0, 1, 1};
    auto st = gram_statistics(f);
    EXPECT_NEAR(st.same_class->mean, std::cos(10.0 * std::numbers::pi / 180.0), 1e-12);
    EXPECT_NEAR(st.same_superclass->mean, 0.0, 1e-12);
}

TEST(GramStatistics, GenerativeModelIsItsOwnStatistic) {
    // Cholesky of the model gram gives features whose inner products reproduce it
    GramModel m = model(GramCase::V, 4, 3, 0.5, 0.2, 0.05, {0, 0, 1, 1});
    Matrix G = build_gram(m);
    Eigen::LLT<Matrix> llt(G);
    ASSERT_EQ(llt.info(), Eigen::Success);
    FeatureMatrix f;
    f.rows = llt.matrixL();
    for (int k = 0; k < m.K; ++k)
        for (int j = 0; j < m.n; ++j) f.labels.push_back(k);
    f.superclasses = m.superclasses;
    auto st = gram_statistics(f);
    EXPECT_NEAR(st.same_class->mean, 0.5, 1e-12);
    EXPECT_NEAR(st.same_class->std, 0.0, 1e-7);
    EXPECT_NEAR(st.same_superclass->mean, 0.2, 1e-12);
    EXPECT_NEAR(st.cross_superclass->mean, 0.05, 1e-12);
}
