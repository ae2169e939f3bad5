#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pulseforge {

using Complex = std::complex<double>;

/// Largest Hilbert-space dimension handled with stack-allocated matrices.
inline constexpr int kMaxDim = 8;

using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using CVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using RSmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a propagation step meets non-finite data.
class PropagationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace pulseforge
