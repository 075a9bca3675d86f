#pragma once

#include "sdlab/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace sdlab {

enum class GramCase { I, II, III, IV, V };

inline std::string case_name(GramCase c) {
    switch (c) {
    case GramCase::I: return "I";
    case GramCase::II: return "II";
    case GramCase::III: return "III";
    case GramCase::IV: return "IV";
    case GramCase::V: return "V";
    }
    return "?";
}

inline GramCase parse_case(const std::string& s) {
    std::string u = s;
    if (u.rfind("Case", 0) == 0 || u.rfind("case", 0) == 0) u = u.substr(4);
    if (u == "I") return GramCase::I;
    if (u == "II") return GramCase::II;
    if (u == "III") return GramCase::III;
    if (u == "IV") return GramCase::IV;
    if (u == "V") return GramCase::V;
    throw ValidationError("unknown gram case '" + s + "'");
}

struct SuperclassMap {
    std::vector<int> assignments;  // class -> superclass, 0-based

    SuperclassMap() = default;
    explicit SuperclassMap(std::vector<int> a) : assignments(std::move(a)) { validate(); }

    static SuperclassMap single(int K) { return SuperclassMap(std::vector<int>(K, 0)); }

    int K() const { return static_cast<int>(assignments.size()); }
    int R() const { return assignments.empty() ? 0 : assignments.back() + 1; }
    int of(int k) const { return assignments[k]; }

    std::vector<int> sizes() const {
        std::vector<int> s(R(), 0);
        for (int a : assignments) ++s[a];
        return s;
    }

    std::vector<int> members(int s) const {
        std::vector<int> out;
        for (int k = 0; k < K(); ++k)
            if (assignments[k] == s) out.push_back(k);
        return out;
    }

    void validate() const {
        require(!assignments.empty(), "superclass map is empty");
        require(assignments.front() == 0, "superclass map must start at superclass 0");
        for (std::size_t k = 1; k < assignments.size(); ++k) {
            int step = assignments[k] - assignments[k - 1];
            require(step >= 0, "superclass map not in canonical (sorted) order at class " + std::to_string(k));
            require(step <= 1, "superclass index skipped at class " + std::to_string(k));
        }
    }
};

struct GramModel {
    GramCase kind = GramCase::III;
    int K = 2;
    int n = 1;
    double c = 0.0;
    std::vector<double> omega;  // CaseII
    double d = 0.0;
    double e = 0.0;
    std::optional<SuperclassMap> superclasses;
    double perturbation = 0.0;
    std::uint64_t seed = 0;

    int size() const { return K * n; }

    SuperclassMap grouping() const {
        if (kind == GramCase::IV || kind == GramCase::V) return *superclasses;
        return SuperclassMap::single(K);
    }

    double intra(int k) const { return kind == GramCase::II ? omega[k] : c; }

    double entry(int a, int b) const {
        if (a == b) return intra(a);
        switch (kind) {
        case GramCase::I:
        case GramCase::II: return 0.0;
        case GramCase::III: return d;
        case GramCase::IV: return superclasses->of(a) == superclasses->of(b) ? d : 0.0;
        case GramCase::V: return superclasses->of(a) == superclasses->of(b) ? d : e;
        }
        return 0.0;
    }

    // K x K class correlation matrix W
    Matrix class_correlation() const {
        Matrix W(K, K);
        for (int a = 0; a < K; ++a)
            for (int b = 0; b < K; ++b) W(a, b) = entry(a, b);
        return W;
    }

    void validate() const {
        require(K >= 1 && n >= 1, "K and n must be positive");
        require(perturbation >= 0.0, "perturbation amplitude must be >= 0");
        switch (kind) {
        case GramCase::I:
            require(c >= 0.0 && c < 1.0, "case I needs 0 <= c < 1");
            break;
        case GramCase::II:
            require(static_cast<int>(omega.size()) == K, "case II needs one omega per class");
            for (double w : omega) require(w > 0.0 && w < 1.0, "case II needs 0 < omega(k) < 1");
            break;
        case GramCase::III:
            require(c < 1.0 && c > d && d >= 0.0, "case III needs 1 > c > d >= 0");
            break;
        case GramCase::IV:
        case GramCase::V:
            require(superclasses.has_value(), "case " + case_name(kind) + " needs a superclass map");
            superclasses->validate();
            require(superclasses->K() == K, "superclass map length differs from K");
            require(c < 1.0 && c > d && d >= e && e >= 0.0, "need 1 > c > d >= e >= 0");
            if (kind == GramCase::IV) require(e == 0.0, "case IV has no inter-superclass correlation");
            break;
        }
    }
};

inline Matrix build_gram(const GramModel& m) {
    m.validate();
    const int N = m.size();
    Matrix W = m.class_correlation();
    Matrix G(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) G(i, j) = (i == j) ? 1.0 : W(i / m.n, j / m.n);
    if (m.perturbation > 0.0) {
        std::mt19937_64 rng(m.seed);
        std::uniform_real_distribution<double> u(-m.perturbation, m.perturbation);
        for (int i = 0; i < N; ++i)
            for (int j = i + 1; j < N; ++j) {
                G(i, j) += u(rng);
                G(j, i) = G(i, j);
            }
    }
    return G;
}

struct EigenSystem {
    Vector values;                        // descending
    Matrix vectors;                       // columns
    std::vector<std::vector<int>> groups; // indices sharing an eigenvalue family
    std::vector<std::string> group_names;

    int size() const { return static_cast<int>(values.size()); }

    Matrix reconstruct() const { return vectors * values.asDiagonal() * vectors.transpose(); }
};

namespace detail {

inline void canonical_sign(Eigen::Ref<Vector> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-12) {
            if (v(i) < 0) v = -v;
            return;
        }
    }
}

inline bool lex_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) < b(i)) return true;
        if (a(i) > b(i)) return false;
    }
    return false;
}

// descending by value; runs within tol ordered by eigenvector
inline void sort_system(EigenSystem& es, double tol) {
    const int N = es.size();
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return es.values(a) > es.values(b); });
    std::vector<Vector> cols;
    cols.reserve(N);
    for (int i : idx) cols.push_back(es.vectors.col(i));
    Vector vals(N);
    for (int i = 0; i < N; ++i) vals(i) = es.values(idx[i]);

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    int start = 0;
    while (start < N) {
        int end = start + 1;
        while (end < N && std::abs(vals(end - 1) - vals(end)) <= tol) ++end;
        std::stable_sort(order.begin() + start, order.begin() + end,
                         [&](int a, int b) { return lex_less(cols[a], cols[b]); });
        start = end;
    }
    EigenSystem out;
    out.values.resize(N);
    out.vectors.resize(es.vectors.rows(), N);
    std::vector<int> where(N);
    for (int i = 0; i < N; ++i) {
        out.values(i) = vals(order[i]);
        out.vectors.col(i) = cols[order[i]];
        where[idx[order[i]]] = i;
    }
    for (auto& g : es.groups)
        for (int& i : g) i = where[i];
    for (auto& g : es.groups) std::sort(g.begin(), g.end());
    out.groups = std::move(es.groups);
    out.group_names = std::move(es.group_names);
    es = std::move(out);
}

// orthonormal contrasts supported on `idx`, orthogonal to the indicator of idx
inline std::vector<Vector> helmert(const std::vector<int>& idx, int dim) {
    std::vector<Vector> out;
    for (std::size_t j = 1; j < idx.size(); ++j) {
        Vector v = Vector::Zero(dim);
        double norm = std::sqrt(static_cast<double>(j * (j + 1)));
        for (std::size_t i = 0; i < j; ++i) v(idx[i]) = 1.0 / norm;
        v(idx[j]) = -static_cast<double>(j) / norm;
        out.push_back(v);
    }
    return out;
}

} // namespace detail

inline EigenSystem numeric_eigensystem(const Matrix& A) {
    require(A.rows() == A.cols(), "matrix not square");
    require(max_abs(A - A.transpose()) <= 1e-10, "matrix not symmetric");
    Matrix S = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
    if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    EigenSystem es;
    es.values = solver.eigenvalues();
    es.vectors = solver.eigenvectors();
    for (int i = 0; i < es.size(); ++i) detail::canonical_sign(es.vectors.col(i));
    const double tol = 1e-9 * std::max(1.0, max_abs(S));
    detail::sort_system(es, tol);
    // group by numerically equal eigenvalues
    int start = 0;
    while (start < es.size()) {
        int end = start + 1;
        while (end < es.size() && std::abs(es.values(end - 1) - es.values(end)) <= tol) ++end;
        std::vector<int> g(end - start);
        std::iota(g.begin(), g.end(), start);
        es.groups.push_back(g);
        es.group_names.push_back("numeric");
        start = end;
    }
    return es;
}

inline EigenSystem analytic_eigensystem(const GramModel& m) {
    m.validate();
    require(m.perturbation == 0.0, "analytic eigensystem needs an unperturbed model; use numeric_eigensystem");
    const int K = m.K, n = m.n, N = m.size();
    std::vector<double> vals;
    std::vector<Vector> vecs;
    EigenSystem es;
    auto add_group = [&](const std::string& name, double lam, const std::vector<Vector>& vs) {
        std::vector<int> g;
        for (const auto& v : vs) {
            g.push_back(static_cast<int>(vals.size()));
            vals.push_back(lam);
            vecs.push_back(v);
        }
        if (!g.empty()) {
            es.groups.push_back(g);
            es.group_names.push_back(name);
        }
    };
    auto class_samples = [&](int k) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), k * n);
        return idx;
    };

    // bulk: contrasts inside each class block
    for (int k = 0; k < K; ++k) add_group("bulk", 1.0 - m.intra(k), detail::helmert(class_samples(k), N));

    SuperclassMap grp = m.grouping();
    const int R = grp.R();
    std::vector<int> Ks = grp.sizes();

    if (m.kind == GramCase::I || m.kind == GramCase::II) {
        for (int k = 0; k < K; ++k) {
            Vector v = Vector::Zero(N);
            v.segment(k * n, n).setConstant(1.0 / std::sqrt(double(n)));
            add_group("class", n * m.intra(k) + 1.0 - m.intra(k), {v});
        }
    } else {
        const double mid = n * (m.c - m.d) + 1.0 - m.c;
        // contrasts of class indicators inside each superclass
        for (int s = 0; s < R; ++s) {
            std::vector<int> mem = grp.members(s);
            std::vector<Vector> vs;
            for (const Vector& h : detail::helmert(mem, K)) {
                Vector v = Vector::Zero(N);
                for (int k = 0; k < K; ++k) v.segment(k * n, n).setConstant(h(k) / std::sqrt(double(n)));
                vs.push_back(v);
            }
            add_group("class", mid, vs);
        }
        // superclass space: R x R block, diagonal unless e > 0
        Matrix B = Matrix::Zero(R, R);
        for (int s = 0; s < R; ++s)
            for (int t = 0; t < R; ++t) {
                B(s, t) = m.e * n * std::sqrt(double(Ks[s]) * Ks[t]);
                if (s == t) B(s, s) += mid + Ks[s] * n * (m.d - m.e);
            }
        std::vector<Vector> ind(R, Vector::Zero(N));
        for (int k = 0; k < K; ++k)
            ind[grp.of(k)].segment(k * n, n).setConstant(1.0 / std::sqrt(double(Ks[grp.of(k)]) * n));
        if (m.e == 0.0) {
            for (int s = 0; s < R; ++s) add_group("superclass", B(s, s), {ind[s]});
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> small(B);
            for (int j = 0; j < R; ++j) {
                Vector v = Vector::Zero(N);
                for (int s = 0; s < R; ++s) v += small.eigenvectors()(s, j) * ind[s];
                detail::canonical_sign(v);
                add_group("superclass", small.eigenvalues()(j), {v});
            }
        }
    }

    es.values.resize(N);
    es.vectors.resize(N, N);
    for (int i = 0; i < N; ++i) {
        es.values(i) = vals[i];
        es.vectors.col(i) = vecs[i];
    }
    detail::sort_system(es, 1e-12 * std::max(1.0, double(N)));
    return es;
}

struct FeatureMatrix {
    Matrix rows;  // m x dfeat
    std::vector<int> labels;
    std::optional<SuperclassMap> superclasses;

    void validate(double tol = 1e-6) const {
        require(static_cast<Eigen::Index>(labels.size()) == rows.rows(), "label count differs from row count");
        for (Eigen::Index i = 0; i < rows.rows(); ++i)
            require(std::abs(rows.row(i).norm() - 1.0) <= tol,
                    "feature row " + std::to_string(i) + " is not unit norm");
        for (int y : labels) require(y >= 0, "negative class label");
        if (superclasses) {
            int maxlab = labels.empty() ? -1 : *std::max_element(labels.begin(), labels.end());
            require(maxlab < superclasses->K(), "label outside superclass map");
        }
    }
};

struct RelationStat {
    double mean = 0.0;
    double std = 0.0;
    std::size_t pairs = 0;
};

struct GramStatistics {
    std::optional<RelationStat> same_class;
    std::optional<RelationStat> same_superclass;  // different class, same superclass
    std::optional<RelationStat> cross_superclass;
};

// without a superclass map every class sits in one superclass
inline GramStatistics gram_statistics(const FeatureMatrix& f) {
    f.validate();
    const Eigen::Index m = f.rows.rows();
    Matrix G = f.rows * f.rows.transpose();
    auto relation = [&](Eigen::Index i, Eigen::Index j) {
        int a = f.labels[i], b = f.labels[j];
        if (a == b) return 0;
        if (!f.superclasses || f.superclasses->of(a) == f.superclasses->of(b)) return 1;
        return 2;
    };
    double sum[3] = {0, 0, 0}, dev[3] = {0, 0, 0};
    std::size_t cnt[3] = {0, 0, 0};
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) {
            int r = relation(i, j);
            sum[r] += G(i, j);
            ++cnt[r];
        }
    double mean[3];
    for (int r = 0; r < 3; ++r) mean[r] = cnt[r] ? sum[r] / double(cnt[r]) : 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) {
            int r = relation(i, j);
            dev[r] += (G(i, j) - mean[r]) * (G(i, j) - mean[r]);
        }
    auto make = [&](int r) -> std::optional<RelationStat> {
        if (cnt[r] == 0) return std::nullopt;
        return RelationStat{mean[r], std::sqrt(dev[r] / double(cnt[r])), cnt[r]};
    };
    return {make(0), make(1), make(2)};
}

} // namespace sdlab
