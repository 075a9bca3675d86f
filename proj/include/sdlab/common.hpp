#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// bad input or violated precondition
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// divergence, non-convergence, non-finite values
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kTieTol = 1e-12;

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

} // namespace sdlab
