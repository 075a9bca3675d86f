#pragma once

#include "sdlab/gram_models.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <utility>

namespace sdlab {

struct CorruptionMatrix {
    Matrix entries;

    CorruptionMatrix() = default;
    explicit CorruptionMatrix(Matrix m) : entries(std::move(m)) { validate(); }

    int K() const { return static_cast<int>(entries.rows()); }
    double operator()(int k, int kp) const { return entries(k, kp); }
    double gap(int k, int kp) const { return entries(k, k) - entries(k, kp); }

    void validate() const {
        require(entries.rows() == entries.cols() && entries.rows() > 0, "corruption matrix must be square");
        for (int k = 0; k < K(); ++k)
            for (int j = 0; j < K(); ++j)
                require(entries(k, j) >= 0.0 && entries(k, j) <= 1.0,
                        "corruption entry (" + std::to_string(k + 1) + "," + std::to_string(j + 1) + ") outside [0,1]");
        for (int k = 0; k < K(); ++k) {
            require(std::abs(entries.row(k).sum() - 1.0) <= 1e-12, "corruption row " + std::to_string(k + 1) + " does not sum to 1");
            require(std::abs(entries.col(k).sum() - 1.0) <= 1e-12, "corruption column " + std::to_string(k + 1) + " does not sum to 1");
        }
    }
};

enum class CorruptionKind { Symmetric, Asymmetric, Superclass, Explicit };

inline CorruptionKind parse_corruption_kind(const std::string& s) {
    if (s == "symmetric") return CorruptionKind::Symmetric;
    if (s == "asymmetric") return CorruptionKind::Asymmetric;
    if (s == "superclass") return CorruptionKind::Superclass;
    if (s == "explicit") return CorruptionKind::Explicit;
    throw ValidationError("unknown corruption kind '" + s + "'");
}

inline CorruptionMatrix make_corruption(CorruptionKind kind, double eta, int K,
                                        const std::optional<SuperclassMap>& groups = std::nullopt,
                                        const std::optional<Matrix>& explicit_matrix = std::nullopt) {
    if (kind == CorruptionKind::Explicit) {
        require(explicit_matrix.has_value(), "explicit corruption needs a matrix");
        return CorruptionMatrix(*explicit_matrix);
    }
    require(eta >= 0.0 && eta <= 1.0, "corruption rate must lie in [0,1]");
    require(K >= 1, "K must be positive");
    Matrix C = Matrix::Zero(K, K);
    if (eta == 0.0) return CorruptionMatrix(Matrix::Identity(K, K));
    require(K >= 2, "noisy corruption needs K >= 2");
    switch (kind) {
    case CorruptionKind::Symmetric:
        C.setConstant(eta / (K - 1));
        C.diagonal().setConstant(1.0 - eta);
        break;
    case CorruptionKind::Asymmetric:
        C.setConstant(eta / K);
        for (int k = 0; k < K; ++k) {
            C(k, k) = 1.0 - eta;
            C(k, (k + 1) % K) = 2.0 * eta / K;
        }
        break;
    case CorruptionKind::Superclass: {
        require(groups.has_value(), "superclass corruption needs a superclass map");
        require(groups->K() == K, "superclass map length differs from K");
        std::vector<int> sz = groups->sizes();
        for (int k = 0; k < K; ++k) {
            int m = sz[groups->of(k)];
            require(m >= 2, "superclass of class " + std::to_string(k + 1) + " is a singleton");
            for (int j = 0; j < K; ++j)
                if (groups->of(j) == groups->of(k)) C(k, j) = (j == k) ? 1.0 - eta : eta / (m - 1);
        }
        break;
    }
    case CorruptionKind::Explicit: break;
    }
    return CorruptionMatrix(C);
}

struct LabelAssignment {
    int K = 0;
    int n = 0;
    std::vector<int> true_labels;
    std::vector<int> given_labels;

    int size() const { return static_cast<int>(true_labels.size()); }

    Matrix empirical() const {
        Matrix C = Matrix::Zero(K, K);
        for (int i = 0; i < size(); ++i) C(true_labels[i], given_labels[i]) += 1.0;
        return C / double(n);
    }

    // one-hot given labels, K x Kn
    Matrix one_hot() const {
        Matrix Y = Matrix::Zero(K, size());
        for (int i = 0; i < size(); ++i) Y(given_labels[i], i) = 1.0;
        return Y;
    }
};

namespace detail {

// smallest denominator q <= qmax with |x - p/q| <= tol
inline long long denominator_of(double x, double tol = 1e-9, long long qmax = 1000000) {
    long long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double r = x;
    for (int it = 0; it < 64; ++it) {
        double a = std::floor(r);
        long long ai = static_cast<long long>(a);
        long long h2 = ai * h1 + h0, k2 = ai * k1 + k0;
        if (k2 > qmax) break;
        h0 = h1; h1 = h2; k0 = k1; k1 = k2;
        if (std::abs(x - double(h1) / double(k1)) <= tol) return k1;
        double frac = r - a;
        if (frac < 1e-15) break;
        r = 1.0 / frac;
    }
    return k1 > 0 && std::abs(x - double(h1) / double(k1)) <= tol ? k1 : 0;
}

} // namespace detail

// smallest n making every n*C integral, 0 if some entry is not a small rational
inline long long minimal_samples(const CorruptionMatrix& C) {
    long long l = 1;
    for (int k = 0; k < C.K(); ++k)
        for (int j = 0; j < C.K(); ++j) {
            long long q = detail::denominator_of(C(k, j));
            if (q == 0) return 0;
            l = std::lcm(l, q);
        }
    return l;
}

namespace detail {

inline LabelAssignment assign_counts(const Eigen::MatrixXi& counts, int n, std::uint64_t seed) {
    const int K = static_cast<int>(counts.rows());
    LabelAssignment la;
    la.K = K;
    la.n = n;
    la.true_labels.reserve(K * n);
    la.given_labels.reserve(K * n);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < K; ++k) {
        std::vector<int> given;
        for (int j = 0; j < K; ++j) given.insert(given.end(), counts(k, j), j);
        std::shuffle(given.begin(), given.end(), rng);
        for (int g : given) {
            la.true_labels.push_back(k);
            la.given_labels.push_back(g);
        }
    }
    return la;
}

} // namespace detail

inline LabelAssignment realize_labels(const CorruptionMatrix& C, int n, std::uint64_t seed) {
    C.validate();
    require(n >= 1, "n must be positive");
    const int K = C.K();
    Eigen::MatrixXi counts(K, K);
    int worst_k = -1, worst_j = -1, bad = 0;
    long long worst_q = 0;
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < K; ++j) {
            double v = n * C(k, j);
            double r = std::round(v);
            if (std::abs(v - r) > 1e-9) {
                ++bad;
                long long q = detail::denominator_of(C(k, j));
                if (worst_k < 0 || q > worst_q) {
                    worst_k = k; worst_j = j; worst_q = q;
                }
            }
            counts(k, j) = static_cast<int>(r);
        }
    if (bad > 0) {
        std::ostringstream os;
        os.precision(12);
        os << "n=" << n << " does not realize the corruption matrix: entry (" << worst_k + 1 << "," << worst_j + 1
           << ") = " << C(worst_k, worst_j) << " gives a non-integral count (" << bad << " entries affected)";
        long long nmin = minimal_samples(C);
        if (nmin > 0) os << "; smallest feasible n is " << nmin;
        throw ValidationError(os.str());
    }
    return detail::assign_counts(counts, n, seed);
}

// largest-remainder rounding of n*C per row, lowest index first on equal remainders
inline LabelAssignment apportion_labels(const CorruptionMatrix& C, int n, std::uint64_t seed) {
    C.validate();
    require(n >= 1, "n must be positive");
    const int K = C.K();
    Eigen::MatrixXi counts(K, K);
    for (int k = 0; k < K; ++k) {
        int used = 0;
        std::vector<std::pair<double, int>> rem;
        for (int j = 0; j < K; ++j) {
            double v = n * C(k, j);
            double f = std::floor(v + 1e-9);
            counts(k, j) = static_cast<int>(f);
            used += counts(k, j);
            rem.emplace_back(-(v - f), j);
        }
        std::stable_sort(rem.begin(), rem.end());
        for (int i = 0; used < n; ++i, ++used) ++counts(k, rem[i % K].second);
    }
    return detail::assign_counts(counts, n, seed);
}

// block-constant class-space operator for the extended (inter-superclass) case
struct ExtendedConstants {
    Matrix class_operator;  // G_K (L I + G_K)^{-1}
    Vector delta;
    double s_const = 0.0;
    bool uniform_cross = true;
    SuperclassMap groups;
    double q = 0.0;

    Matrix power(int t) const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(class_operator);
        Vector d = es.eigenvalues().array().pow(double(t));
        return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
    }

    // R x R block values of T_t - q^t I
    Matrix blocks(int t) const {
        Matrix T = power(t);
        const int R = groups.R();
        Matrix A(R, R);
        for (int s = 0; s < R; ++s)
            for (int u = 0; u < R; ++u) {
                int a = groups.members(s).front(), b = groups.members(u).front();
                A(s, u) = T(a, b) - (a == b ? std::pow(q, t) : 0.0);
            }
        return A;
    }

    double nu(int t) const {
        Matrix A = blocks(t);
        const int R = static_cast<int>(A.rows());
        if (R < 2) return 0.0;
        return (A.sum() - A.trace()) / double(R * (R - 1));
    }

    Vector mu(int t) const {
        Matrix A = blocks(t);
        double v = nu(t);
        std::vector<int> sz = groups.sizes();
        Vector m(A.rows());
        for (int s = 0; s < A.rows(); ++s) m(s) = sz[s] * (A(s, s) - v);
        return m;
    }
};

struct TheoryConstants {
    GramCase kind = GramCase::III;
    int K = 0;
    int n = 0;
    double lambda = 0.0;
    double p = 0.0;
    double q = 0.0;
    Vector r;        // per superclass
    Vector p_class;  // per class (differs only for case II)
    Vector q_class;
    SuperclassMap groups;
    std::optional<ExtendedConstants> extended;

    double L() const { return double(K) * K * n * lambda; }
    double ratio(int k) const { return q_class(k) / p_class(k); }
    double threshold(int k, int t) const { return 1.0 / (std::pow(ratio(k), t) - 1.0); }
};

inline double eig_ratio(double eig, double L) { return eig / (L + eig); }

inline TheoryConstants theory_constants(const GramModel& m, double lambda) {
    require(lambda > 0.0, "lambda must be positive");
    require(m.K >= 1 && m.n >= 1, "K and n must be positive");
    TheoryConstants tc;
    tc.kind = m.kind;
    tc.K = m.K;
    tc.n = m.n;
    tc.lambda = lambda;
    const double L = tc.L();
    const int K = m.K, n = m.n;
    tc.p_class.resize(K);
    tc.q_class.resize(K);
    if (m.kind == GramCase::II) {
        require(static_cast<int>(m.omega.size()) == K, "case II needs one omega per class");
        for (int k = 0; k < K; ++k) {
            double w = m.omega[k];
            require(w > 0.0 && w < 1.0, "case II needs 0 < omega(k) < 1");
            tc.p_class(k) = eig_ratio(1.0 - w, L);
            tc.q_class(k) = eig_ratio(1.0 - w + n * w, L);
        }
        // scalar summaries: weakest class ratio
        tc.p = tc.p_class.maxCoeff();
        tc.q = tc.q_class.minCoeff();
        tc.groups = SuperclassMap::single(K);
        tc.r = Vector::Constant(1, tc.q);
        return tc;
    }
    const double d = (m.kind == GramCase::I) ? 0.0 : m.d;
    const double e = (m.kind == GramCase::V) ? m.e : 0.0;
    require(m.c < 1.0 && d >= 0.0, "need c < 1 and d >= 0");
    require(m.c >= d, "need c >= d");
    if (m.kind == GramCase::IV || m.kind == GramCase::V) {
        require(m.superclasses.has_value(), "case " + case_name(m.kind) + " needs a superclass map");
        m.superclasses->validate();
        require(m.superclasses->K() == K, "superclass map length differs from K");
        require(d >= e && e >= 0.0, "need d >= e >= 0");
    }
    tc.groups = m.grouping();
    const double mid = 1.0 - m.c + n * (m.c - d);
    tc.p = eig_ratio(1.0 - m.c, L);
    tc.q = eig_ratio(mid, L);
    tc.p_class.setConstant(tc.p);
    tc.q_class.setConstant(tc.q);
    std::vector<int> sz = tc.groups.sizes();
    tc.r.resize(tc.groups.R());
    for (int s = 0; s < tc.groups.R(); ++s) tc.r(s) = eig_ratio(mid + sz[s] * n * d, L);

    if (m.kind == GramCase::V) {
        ExtendedConstants ex;
        ex.groups = tc.groups;
        ex.q = tc.q;
        GramModel mm = m;
        mm.d = d;
        mm.e = e;
        Matrix GK = n * mm.class_correlation() + (1.0 - m.c) * Matrix::Identity(K, K);
        Matrix Linv = (L * Matrix::Identity(K, K) + GK).inverse();
        ex.class_operator = GK * Linv;
        ex.class_operator = 0.5 * (ex.class_operator + ex.class_operator.transpose()).eval();
        Matrix A1 = ex.blocks(1);
        const int R = static_cast<int>(A1.rows());
        double nu1 = ex.nu(1);
        ex.delta.resize(R);
        for (int s = 0; s < R; ++s) ex.delta(s) = A1(s, s) - nu1;
        ex.s_const = tc.q - K * nu1;
        for (int s = 0; s < R; ++s)
            for (int u = 0; u < R; ++u)
                if (s != u && std::abs(A1(s, u) - nu1) > 1e-12) ex.uniform_cross = false;
        tc.extended = ex;
    }
    return tc;
}

inline void reject_cross_superclass(const CorruptionMatrix& C, const SuperclassMap& g) {
    require(C.K() == g.K(), "corruption matrix size differs from class count");
    for (int k = 0; k < C.K(); ++k)
        for (int j = 0; j < C.K(); ++j)
            require(g.of(k) == g.of(j) || C(k, j) == 0.0,
                    "corruption entry (" + std::to_string(k + 1) + "," + std::to_string(j + 1) +
                        ") crosses superclasses; the accuracy conditions assume it is zero");
}

struct PairVerdict {
    int k = 0;
    int kp = 0;
    double gap = 0.0;
    double threshold = 0.0;
    bool ok = false;
};

struct ConditionResult {
    bool achieves_100 = true;
    std::vector<std::pair<int, int>> failing_pairs;
    std::vector<PairVerdict> pairs;
};

inline bool strictly_greater(double lhs, double rhs) { return lhs - rhs > kTieTol; }

inline ConditionResult sd_accuracy_condition(const CorruptionMatrix& C, const TheoryConstants& tc, int t) {
    require(t >= 1, "round must be >= 1");
    reject_cross_superclass(C, tc.groups);
    ConditionResult res;
    for (int k = 0; k < C.K(); ++k) {
        double thr = tc.threshold(k, t);
        for (int j = 0; j < C.K(); ++j) {
            if (j == k) continue;
            PairVerdict v{k, j, C.gap(k, j), thr, false};
            v.ok = std::isfinite(thr) && thr > 0.0 && strictly_greater(C(k, k), C(k, j) + thr);
            if (!v.ok) {
                res.achieves_100 = false;
                res.failing_pairs.emplace_back(k, j);
            }
            res.pairs.push_back(v);
        }
    }
    return res;
}

inline ConditionResult pll_accuracy_condition(const CorruptionMatrix& C) {
    ConditionResult res;
    for (int k = 0; k < C.K(); ++k)
        for (int j = 0; j < C.K(); ++j) {
            if (j == k) continue;
            PairVerdict v{k, j, C.gap(k, j), 0.0, strictly_greater(C(k, k), C(k, j))};
            if (!v.ok) {
                res.achieves_100 = false;
                res.failing_pairs.emplace_back(k, j);
            }
            res.pairs.push_back(v);
        }
    return res;
}

// std::nullopt means unreachable
inline std::optional<int> minimal_rounds(const CorruptionMatrix& C, const TheoryConstants& tc) {
    reject_cross_superclass(C, tc.groups);
    for (int k = 0; k < tc.K; ++k) require(tc.q_class(k) > tc.p_class(k), "minimal_rounds needs q > p");
    double tstar = 1.0;
    for (int k = 0; k < C.K(); ++k) {
        double g = std::numeric_limits<double>::infinity();
        for (int j = 0; j < C.K(); ++j)
            if (j != k) g = std::min(g, C.gap(k, j));
        if (!(g > kTieTol)) return std::nullopt;
        if (std::isfinite(g)) tstar = std::max(tstar, std::log1p(1.0 / g) / std::log(tc.ratio(k)));
    }
    int t = std::max(1, static_cast<int>(std::floor(tstar)));
    const int cap = t + 100000;
    while (!sd_accuracy_condition(C, tc, t).achieves_100) {
        if (++t > cap) return std::nullopt;
    }
    while (t > 1 && sd_accuracy_condition(C, tc, t - 1).achieves_100) --t;
    return t;
}

inline bool evolving_condition(const CorruptionMatrix& C, const std::vector<std::pair<double, double>>& schedule,
                               double lambda, int K, int n, int t) {
    require(t >= 1, "round must be >= 1");
    require(static_cast<int>(schedule.size()) >= t, "schedule shorter than the requested round");
    require(C.K() == K, "corruption matrix size differs from K");
    const double L = double(K) * K * n * lambda;
    double prod = 1.0;
    for (int i = 0; i < t; ++i) {
        auto [c, d] = schedule[i];
        require(c > d, "each schedule entry needs c > d");
        double p = eig_ratio(1.0 - c, L);
        double q = eig_ratio(1.0 - c + n * (c - d), L);
        prod *= q / p;
    }
    const double thr = 1.0 / (prod - 1.0);
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < K; ++j)
            if (j != k && !strictly_greater(C(k, k), C(k, j) + thr)) return false;
    return true;
}

} // namespace sdlab
