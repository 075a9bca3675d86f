#pragma once

#include "sdlab/distillation_core.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace sdlab {

enum class SolverMethod { Preconditioned, Gradient };

inline SolverMethod parse_solver_method(const std::string& s) {
    if (s == "preconditioned") return SolverMethod::Preconditioned;
    if (s == "gradient") return SolverMethod::Gradient;
    throw ValidationError("unknown solver method '" + s + "'");
}

inline std::string method_name(SolverMethod m) {
    return m == SolverMethod::Gradient ? "gradient" : "preconditioned";
}

struct SolverConfig {
    double learning_rate = 0.5;
    int max_iterations = 50000;
    double tolerance = 1e-10;
    std::uint64_t seed = 0;
    bool warm_start = false;
    SolverMethod method = SolverMethod::Preconditioned;

    void validate() const {
        require(learning_rate > 0.0, "learning rate must be positive");
        require(max_iterations > 0, "max_iterations must be positive");
        require(tolerance > 0.0, "tolerance must be positive");
    }
};

struct OracleResult {
    OutputMatrix outputs;
    bool converged = false;
    double final_loss = 0.0;  // l_inf residual
    double objective = 0.0;   // 0.5 ||Y - sigma_hat(Y)||_F^2
    int iterations_used = 0;
};

inline Vector softmax(const Vector& v, double tau = 1.0) {
    require(tau > 0.0, "temperature must be positive");
    Vector z = ((v.array() - v.maxCoeff()) / tau).exp();
    return z / z.sum();
}

inline Vector linearized_softmax(const Vector& v) {
    require(std::abs(v.sum()) <= 1e-9, "linearized softmax needs zero-mean logits");
    const double K = double(v.size());
    return (v.array() / K + 1.0 / K).matrix();
}

// y_i = softmax_tau( tau * s * sum_j G_ij (yprev_j - y_j) ),  s = 1/(K n lambda)
class FixedPointProblem {
public:
    FixedPointProblem(Matrix gram, const Matrix& y_prev, double lambda, int K, int n, double tau = 1.0)
        : G_(std::move(gram)), Yp_(y_prev), s_(1.0 / (double(K) * n * lambda)), tau_(tau) {
        require(lambda > 0.0, "lambda must be positive");
        require(tau > 0.0, "temperature must be positive");
        require(G_.rows() == G_.cols() && G_.rows() == K * n, "gram size differs from K*n");
        require(Yp_.rows() == K && Yp_.cols() == K * n, "previous outputs have the wrong shape");
    }

    double scale() const { return s_; }
    const Matrix& gram() const { return G_; }

    Matrix logits(const Matrix& Y) const { return (tau_ * s_) * ((Yp_ - Y) * G_); }

    Matrix apply(const Matrix& Y) const {
        Matrix Z = logits(Y);
        Matrix S(Z.rows(), Z.cols());
        for (Eigen::Index i = 0; i < Z.cols(); ++i) S.col(i) = softmax(Z.col(i), tau_);
        return S;
    }

    double objective(const Matrix& Y) const { return 0.5 * (Y - apply(Y)).squaredNorm(); }

    Matrix gradient(const Matrix& Y) const {
        Matrix S = apply(Y);
        Matrix R = Y - S;
        Matrix SR = S.cwiseProduct(R);
        Eigen::RowVectorXd col = SR.colwise().sum();
        Matrix J = SR - S * col.asDiagonal();
        return R + s_ * J * G_;
    }

private:
    Matrix G_;
    Matrix Yp_;
    double s_;
    double tau_;
};

class OracleSolver {
public:
    OracleSolver(const Matrix& gram, double lambda, int K, int n, double tau = 1.0)
        : G_(gram), lambda_(lambda), K_(K), n_(n), tau_(tau) {
        require(gram.rows() == K * n && gram.cols() == K * n, "gram size differs from K*n");
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
        if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the gram matrix failed");
        V_ = es.eigenvectors();
        const double s = 1.0 / (double(K) * n * lambda);
        pinv_.resize(es.eigenvalues().size());
        for (Eigen::Index i = 0; i < pinv_.size(); ++i) {
            double den = 1.0 + s * es.eigenvalues()(i) / K;
            pinv_(i) = den > 1e-8 ? 1.0 / den : 1.0;
        }
        phi1_ = V_ * (Vector::Ones(pinv_.size()) - pinv_).asDiagonal() * V_.transpose();
    }

    OracleResult solve(const OutputMatrix& prev, const SolverConfig& cfg) const {
        cfg.validate();
        FixedPointProblem fp(G_, prev.Y, lambda_, K_, n_, tau_);
        const int N = K_ * n_;
        Matrix Y(K_, N);
        if (cfg.warm_start) {
            Y = single_step(prev.Y, phi1_);
        } else {
            std::mt19937_64 rng(cfg.seed);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int i = 0; i < N; ++i) {
                for (int k = 0; k < K_; ++k) Y(k, i) = u(rng);
                Y.col(i) /= Y.col(i).sum();
            }
        }
        OracleResult best;
        best.final_loss = std::numeric_limits<double>::infinity();
        for (int it = 0;; ++it) {
            Matrix R = Y - fp.apply(Y);
            const double res = max_abs(R);
            if (!std::isfinite(res)) throw NumericalError("oracle loss is not finite at iteration " + std::to_string(it));
            if (res < best.final_loss) {
                best.outputs = {Y, prev.round + 1};
                best.final_loss = res;
                best.objective = 0.5 * R.squaredNorm();
                best.iterations_used = it;
            }
            if (res < cfg.tolerance) {
                best.converged = true;
                return best;
            }
            if (it >= cfg.max_iterations) {
                best.iterations_used = it;
                return best;
            }
            if (cfg.method == SolverMethod::Preconditioned)
                Y -= cfg.learning_rate * (((R * V_) * pinv_.asDiagonal()) * V_.transpose());
            else
                Y -= cfg.learning_rate * fp.gradient(Y);
        }
    }

private:
    Matrix G_;
    double lambda_;
    int K_, n_;
    double tau_;
    Matrix V_;
    Vector pinv_;
    Matrix phi1_;
};

inline OracleResult solve_round(const OutputMatrix& prev, const Matrix& gram, double lambda, int K, int n,
                                const SolverConfig& cfg, double tau = 1.0) {
    return OracleSolver(gram, lambda, K, n, tau).solve(prev, cfg);
}

struct ApproxError {
    double max_gap = 0.0;
    std::vector<double> per_round;
    std::vector<int> iterations;
};

// oracle rounds chained from the previous oracle output, compared with the closed-form trajectory
inline ApproxError measure_approx_error(const GramModel& model, const CorruptionMatrix& C, double lambda, int t,
                                        const SolverConfig& cfg) {
    require(t >= 1, "need at least one round");
    Matrix G = build_gram(model);
    LabelAssignment la;
    try {
        la = realize_labels(C, model.n, cfg.seed);
    } catch (const ValidationError&) {
        la = apportion_labels(C, model.n, cfg.seed);
    }
    OutputMatrix Y0{la.one_hot(), 0};
    EigenSystem eig = model.perturbation == 0.0 ? analytic_eigensystem(model) : numeric_eigensystem(G);
    auto traj = trajectory(Y0, eig, lambda, model.K, model.n, t);
    OracleSolver solver(G, lambda, model.K, model.n);
    ApproxError out;
    OutputMatrix prev = Y0;
    for (int r = 1; r <= t; ++r) {
        OracleResult res = solver.solve(prev, cfg);
        if (!res.converged)
            throw NumericalError("oracle did not converge at round " + std::to_string(r) + " (residual " +
                                 std::to_string(res.final_loss) + ")");
        double gap = max_abs(res.outputs.Y - traj[r].Y);
        out.per_round.push_back(gap);
        out.iterations.push_back(res.iterations_used);
        out.max_gap = std::max(out.max_gap, gap);
        prev = res.outputs;
    }
    return out;
}

} // namespace sdlab
