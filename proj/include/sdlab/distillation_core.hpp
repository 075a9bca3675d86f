#pragma once

#include "sdlab/noise_theory.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace sdlab {

struct OutputMatrix {
    Matrix Y;  // K x Kn, one column per sample
    int round = 0;

    int K() const { return static_cast<int>(Y.rows()); }
    int size() const { return static_cast<int>(Y.cols()); }
    double min_entry() const { return Y.size() ? Y.minCoeff() : 0.0; }
    double max_column_sum_error() const {
        return Y.size() ? (Y.colwise().sum().array() - 1.0).abs().maxCoeff() : 0.0;
    }
};

struct AveragingOperator {
    Matrix matrix;
    Vector eigenvalues;  // (l_i / (L + l_i))^t in source order
    int t = 0;
    double lambda = 0.0;
};

inline Vector operator_eigenvalues(const EigenSystem& eig, double lambda, int K, int n, int t) {
    require(lambda > 0.0, "lambda must be positive");
    require(t >= 0, "round must be >= 0");
    const double L = double(K) * K * n * lambda;
    Vector out(eig.size());
    for (int i = 0; i < eig.size(); ++i) {
        double l = eig.values(i);
        require(l >= -1e-8, "negative gram eigenvalue " + std::to_string(l));
        out(i) = std::pow(l / (L + l), t);
    }
    return out;
}

inline AveragingOperator averaging_operator(const EigenSystem& eig, double lambda, int K, int n, int t) {
    AveragingOperator op;
    op.t = t;
    op.lambda = lambda;
    op.eigenvalues = operator_eigenvalues(eig, lambda, K, n, t);
    if (t == 0)
        op.matrix = Matrix::Identity(eig.size(), eig.size());
    else
        op.matrix = eig.vectors * op.eigenvalues.asDiagonal() * eig.vectors.transpose();
    return op;
}

inline Matrix single_step(const Matrix& Y, const Matrix& phi1) {
    const double u = 1.0 / double(Y.rows());
    return (Y.array() - u).matrix() * phi1 + Matrix::Constant(Y.rows(), Y.cols(), u);
}

inline std::vector<OutputMatrix> trajectory(const OutputMatrix& Y0, const EigenSystem& eig, double lambda, int K,
                                            int n, int t_max) {
    require(Y0.K() == K, "Y0 has " + std::to_string(Y0.K()) + " rows, expected K=" + std::to_string(K));
    require(Y0.size() == eig.size() && eig.size() == K * n, "Y0, eigensystem and K*n disagree in size");
    require(t_max >= 0, "t_max must be >= 0");
    std::vector<OutputMatrix> out;
    out.push_back({Y0.Y, 0});
    const double u = 1.0 / K;
    Matrix B = (Y0.Y.array() - u).matrix() * eig.vectors;
    for (int t = 1; t <= t_max; ++t) {
        Vector w = operator_eigenvalues(eig, lambda, K, n, t);
        Matrix Yt = (B * w.asDiagonal()) * eig.vectors.transpose();
        Yt.array() += u;
        out.push_back({Yt, t});
    }
    return out;
}

inline Vector unit(int K, int k) {
    Vector v = Vector::Zero(K);
    v(k) = 1.0;
    return v;
}

inline Vector superclass_uniform(const SuperclassMap& g, int s) {
    std::vector<int> mem = g.members(s);
    Vector v = Vector::Zero(g.K());
    for (int k : mem) v(k) = 1.0 / double(mem.size());
    return v;
}

inline Vector closed_form_output(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc, int t) {
    const int K = tc.K;
    require(C.K() == K, "corruption matrix size differs from K");
    require(y >= 0 && y < K && yhat >= 0 && yhat < K, "label out of range");
    require(t >= 0, "round must be >= 0");
    require(tc.kind != GramCase::V, "case V needs extended_output");
    reject_cross_superclass(C, tc.groups);
    const double pt = std::pow(tc.p_class(y), t), qt = std::pow(tc.q_class(y), t);
    Vector out = pt * unit(K, yhat) + (qt - pt) * C.entries.row(y).transpose();
    if (tc.kind == GramCase::II) return out + Vector::Constant(K, (1.0 - qt) / K);
    const int s = tc.groups.of(y);
    const double rt = std::pow(tc.r(s), t);
    return out + (rt - qt) * superclass_uniform(tc.groups, s) + Vector::Constant(K, (1.0 - rt) / K);
}

inline Vector extended_output(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc, int t) {
    const int K = tc.K;
    require(tc.extended.has_value(), "extended constants missing (case V only)");
    require(C.K() == K, "corruption matrix size differs from K");
    require(y >= 0 && y < K && yhat >= 0 && yhat < K, "label out of range");
    require(t >= 0, "round must be >= 0");
    reject_cross_superclass(C, tc.groups);
    const auto& ex = *tc.extended;
    const double pt = std::pow(tc.p, t), qt = std::pow(tc.q, t);
    Vector out = pt * unit(K, yhat) + (qt - pt) * C.entries.row(y).transpose() + Vector::Constant(K, (1.0 - qt) / K);
    if (t == 0) return out;
    Matrix A = ex.blocks(t);
    std::vector<int> sz = tc.groups.sizes();
    const int s = tc.groups.of(y);
    for (int u = 0; u < tc.groups.R(); ++u) {
        Vector avg = Vector::Zero(K);
        for (int b : tc.groups.members(u)) avg += C.entries.row(b).transpose();
        avg /= double(sz[u]);
        out += sz[u] * A(u, s) * (avg.array() - 1.0 / K).matrix();
    }
    return out;
}

inline OutputMatrix closed_form_matrix(const LabelAssignment& la, const CorruptionMatrix& C, const TheoryConstants& tc,
                                       int t) {
    OutputMatrix om;
    om.round = t;
    om.Y.resize(tc.K, la.size());
    for (int i = 0; i < la.size(); ++i)
        om.Y.col(i) = tc.kind == GramCase::V ? extended_output(la.true_labels[i], la.given_labels[i], C, tc, t)
                                             : closed_form_output(la.true_labels[i], la.given_labels[i], C, tc, t);
    return om;
}

// two largest entries, lowest index on ties
inline std::array<int, 2> top_two(const Vector& v) {
    require(v.size() >= 2, "top-two refinement needs K >= 2");
    int a = 0;
    for (int k = 1; k < v.size(); ++k)
        if (v(k) > v(a) + kTieTol) a = k;
    int b = (a == 0) ? 1 : 0;
    for (int k = 0; k < v.size(); ++k)
        if (k != a && v(k) > v(b) + kTieTol) b = k;
    return {a, b};
}

struct PartialLabelMatrix {
    Matrix Y;
};

inline PartialLabelMatrix pll_refine(const OutputMatrix& teacher) {
    require(teacher.K() >= 2, "top-two refinement needs K >= 2");
    PartialLabelMatrix out;
    out.Y = Matrix::Zero(teacher.K(), teacher.size());
    for (int i = 0; i < teacher.size(); ++i) {
        auto [a, b] = top_two(teacher.Y.col(i));
        out.Y(a, i) = 0.5;
        out.Y(b, i) = 0.5;
    }
    return out;
}

inline int runner_up_class(const CorruptionMatrix& C, int y) {
    int best = -1;
    for (int k = 0; k < C.K(); ++k)
        if (k != y && (best < 0 || C(y, k) > C(y, best))) best = k;
    return best;
}

inline bool pll_premise(const CorruptionMatrix& C, int y) {
    for (int k = 0; k < C.K(); ++k)
        if (k != y && !strictly_greater(C(y, y), C(y, k))) return false;
    return true;
}

struct PllOutput {
    Vector y;
    bool premise_holds = true;
};

inline PllOutput pll_output(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc) {
    const int K = tc.K;
    require(K >= 2, "PLL needs K >= 2");
    require(C.K() == K, "corruption matrix size differs from K");
    require(y >= 0 && y < K && yhat >= 0 && yhat < K, "label out of range");
    require(tc.kind != GramCase::V, "PLL closed form is not defined for case V");
    reject_cross_superclass(C, tc.groups);
    const int yt = runner_up_class(C, y);
    const int second = (yhat == y) ? yt : yhat;
    Vector ybar = 0.5 * (unit(K, y) + unit(K, second));

    Vector avg = 0.5 * unit(K, y);
    for (int j = 0; j < K; ++j)
        if (j != y) avg(j) += 0.5 * C(y, j);
    if (C(y, yt) > 0.0) {
        avg(yt) += 0.5 * C(y, y);
    } else {
        // every other class ties at zero mass
        std::vector<int> tied;
        for (int k = 0; k < K; ++k)
            if (k != y && tc.groups.of(k) == tc.groups.of(y)) tied.push_back(k);
        if (tied.empty())
            for (int k = 0; k < K; ++k)
                if (k != y) tied.push_back(k);
        for (int k : tied) avg(k) += 0.5 * C(y, y) / double(tied.size());
    }

    const double p = tc.p_class(y), q = tc.q_class(y);
    const int s = tc.groups.of(y);
    const double r = (tc.kind == GramCase::II) ? q : tc.r(s);
    PllOutput out;
    out.y = p * ybar + (q - p) * avg + (r - q) * superclass_uniform(tc.groups, s) + Vector::Constant(K, (1.0 - r) / K);
    out.premise_holds = pll_premise(C, y);
    return out;
}

// refined teacher at t = 1, mass on its actual top two
inline Vector pll_population_output(int y, int yhat, const CorruptionMatrix& C, const TheoryConstants& tc) {
    const int K = tc.K;
    require(tc.kind != GramCase::V, "PLL closed form is not defined for case V");
    auto ybar = [&](int b, int j) {
        auto [a1, a2] = top_two(closed_form_output(b, j, C, tc, 1));
        return Vector(0.5 * (unit(K, a1) + unit(K, a2)));
    };
    auto class_avg = [&](int b) {
        Vector a = Vector::Zero(K);
        for (int j = 0; j < K; ++j)
            if (C(b, j) > 0.0) a += C(b, j) * ybar(b, j);
        return a;
    };
    const int s = tc.groups.of(y);
    std::vector<int> mem = tc.groups.members(s);
    Vector sup = Vector::Zero(K);
    for (int b : mem) sup += class_avg(b);
    sup /= double(mem.size());
    const double p = tc.p_class(y), q = tc.q_class(y);
    const double r = (tc.kind == GramCase::II) ? q : tc.r(s);
    return p * ybar(y, yhat) + (q - p) * class_avg(y) + (r - q) * sup + Vector::Constant(K, (1.0 - r) / K);
}

inline bool argmax_correct(const Vector& v, int y) {
    for (int k = 0; k < v.size(); ++k)
        if (k != y && !(v(y) - v(k) > kTieTol)) return false;
    return true;
}

inline double argmax_accuracy(const OutputMatrix& out, const std::vector<int>& true_labels) {
    require(static_cast<int>(true_labels.size()) == out.size(), "label count differs from output columns");
    if (out.size() == 0) return 0.0;
    int hit = 0;
    for (int i = 0; i < out.size(); ++i)
        if (argmax_correct(out.Y.col(i), true_labels[i])) ++hit;
    return double(hit) / double(out.size());
}

enum class PredictionMode { SD, PLL };

inline double predicted_population_accuracy(const CorruptionMatrix& C, const TheoryConstants& tc, int t,
                                            PredictionMode mode) {
    reject_cross_superclass(C, tc.groups);
    const int K = C.K();
    double acc = 0.0;
    if (mode == PredictionMode::SD) {
        require(t >= 1, "round must be >= 1");
        for (int k = 0; k < K; ++k) {
            const double thr = tc.threshold(k, t);
            for (int kp = 0; kp < K; ++kp) {
                if (C(k, kp) == 0.0) continue;
                bool ok = true;
                if (kp == k) {
                    for (int j = 0; j < K; ++j)
                        if (j != k && !strictly_greater(C.gap(k, j), -thr)) ok = false;
                } else {
                    ok = strictly_greater(C.gap(k, kp), thr);
                    for (int j = 0; j < K; ++j)
                        if (j != k && j != kp && !strictly_greater(C(k, k), C(k, j))) ok = false;
                }
                if (ok) acc += C(k, kp);
            }
        }
    } else {
        for (int k = 0; k < K; ++k) {
            const bool premise = pll_premise(C, k);
            for (int kp = 0; kp < K; ++kp) {
                if (C(k, kp) == 0.0) continue;
                Vector v = premise ? pll_output(k, kp, C, tc).y : pll_population_output(k, kp, C, tc);
                if (argmax_correct(v, k)) acc += C(k, kp);
            }
        }
    }
    return acc / double(K);
}

} // namespace sdlab
