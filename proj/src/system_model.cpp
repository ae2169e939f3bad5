#include "pulseforge/system_model.hpp"

#include <cmath>

namespace pulseforge {

void SystemParameters::validate() const {
    if (!std::isfinite(gamma) || !std::isfinite(delta)) throw std::invalid_argument("system parameters must be finite");
    if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
}

ReqcModel::ReqcModel(double decay_rate) : decay_rate_(decay_rate) {
    if (!(decay_rate >= 0.0) || !std::isfinite(decay_rate)) {
        throw std::invalid_argument("decay rate must be finite and non-negative");
    }
}

CMatrix ReqcModel::evaluate(const SystemParameters& xi, const Eigen::Ref<const VectorXd>& eps) const {
    if (eps.size() != 4) throw std::invalid_argument("REQC model expects 4 control channels");
    CMatrix h = CMatrix::Zero(3, 3);
    h(2, 2) = Complex(-xi.delta, -0.5 * decay_rate_);
    const double g = 0.5 * xi.gamma;
    for (int i = 0; i < 2; ++i) {
        const Complex omega(eps[2 * i], eps[2 * i + 1]);
        h(2, i) = g * omega;
        h(i, 2) = g * std::conj(omega);
    }
    return h;
}

std::vector<CMatrix> ReqcModel::control_derivatives(const SystemParameters& xi) const {
    const double g = 0.5 * xi.gamma;
    const Complex i1(0.0, 1.0);
    std::vector<CMatrix> out;
    out.reserve(4);
    for (int level = 0; level < 2; ++level) {
        for (const Complex phase : {Complex(1.0, 0.0), i1}) {
            CMatrix d = CMatrix::Zero(3, 3);
            d(2, level) = g * phase;
            d(level, 2) = g * std::conj(phase);
            out.push_back(d);
        }
    }
    return out;
}

CMatrix TwoLevelModel::evaluate(const SystemParameters& xi, const Eigen::Ref<const VectorXd>& eps) const {
    if (eps.size() != 2) throw std::invalid_argument("two-level model expects 2 control channels");
    const double g = 0.5 * xi.gamma;
    CMatrix h(2, 2);
    h(0, 0) = 0.5 * xi.delta;
    h(1, 1) = -0.5 * xi.delta;
    h(0, 1) = g * Complex(eps[0], -eps[1]);
    h(1, 0) = g * Complex(eps[0], eps[1]);
    return h;
}

std::vector<CMatrix> TwoLevelModel::control_derivatives(const SystemParameters& xi) const {
    const double g = 0.5 * xi.gamma;
    CMatrix sx = CMatrix::Zero(2, 2);
    CMatrix sy = CMatrix::Zero(2, 2);
    sx(0, 1) = sx(1, 0) = g;
    sy(0, 1) = Complex(0.0, -g);
    sy(1, 0) = Complex(0.0, g);
    return {sx, sy};
}

ReqcModel reqc_model(double decay_rate) { return ReqcModel(decay_rate); }

void TargetGate::validate() const {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0) throw std::invalid_argument("target gate must be square");
    const CMatrix defect = matrix.adjoint() * matrix - CMatrix::Identity(matrix.rows(), matrix.cols());
    if (max_abs(defect) > 1e-12) throw std::invalid_argument("target gate is not unitary");
}

TargetGate phase_gate_target() {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = -1.0;
    m(1, 1) = 1.0;
    return {m};
}

TargetGate identity_target(int n) {
    if (n < 1) throw std::invalid_argument("identity target needs n >= 1");
    return {CMatrix::Identity(n, n)};
}

}  // namespace pulseforge
