#pragma once

#include <memory>
#include <vector>

#include "pulseforge/types.hpp"

namespace pulseforge {

/// Uncontrollable parameters xi = (gamma, delta) of one ensemble member.
struct SystemParameters {
    double gamma = 1.0;  ///< relative field strength
    double delta = 0.0;  ///< inhomogeneous shift of |e>, units of Omega_0

    void validate() const;
    bool operator==(const SystemParameters&) const = default;
};

/// H(xi, eps) for a bilinear control system.
///
/// Implementations are immutable; `evaluate` and `control_derivatives` are
/// pure and may be called concurrently.
class HamiltonianModel {
public:
    virtual ~HamiltonianModel() = default;

    virtual int dimension() const = 0;
    virtual int n_controls() const = 0;
    /// Ordered indices of the computational subspace inside the full space.
    virtual const std::vector<int>& qubit_indices() const = 0;
    virtual CMatrix evaluate(const SystemParameters& xi, const Eigen::Ref<const VectorXd>& eps) const = 0;
    /// dH/d eps_c, one matrix per channel; independent of eps.
    virtual std::vector<CMatrix> control_derivatives(const SystemParameters& xi) const = 0;
    virtual bool hermitian() const = 0;
};

/// Three-level ion with basis (|0>, |1>, |e>):
///   H = -delta |e><e| + gamma/2 sum_i (Omega_i |e><i| + h.c.) - i/2 decay |e><e|
/// with Omega_i = eps_{2i} + i eps_{2i+1}.
class ReqcModel final : public HamiltonianModel {
public:
    explicit ReqcModel(double decay_rate = 0.0);

    int dimension() const override { return 3; }
    int n_controls() const override { return 4; }
    const std::vector<int>& qubit_indices() const override { return qubits_; }
    CMatrix evaluate(const SystemParameters& xi, const Eigen::Ref<const VectorXd>& eps) const override;
    std::vector<CMatrix> control_derivatives(const SystemParameters& xi) const override;
    bool hermitian() const override { return decay_rate_ == 0.0; }

    double decay_rate() const { return decay_rate_; }

private:
    double decay_rate_;
    std::vector<int> qubits_{0, 1};
};

/// Driven two-level system used by tests and the `stub` config selector:
///   H = delta/2 sigma_z + gamma/2 (eps_0 sigma_x + eps_1 sigma_y).
class TwoLevelModel final : public HamiltonianModel {
public:
    int dimension() const override { return 2; }
    int n_controls() const override { return 2; }
    const std::vector<int>& qubit_indices() const override { return qubits_; }
    CMatrix evaluate(const SystemParameters& xi, const Eigen::Ref<const VectorXd>& eps) const override;
    std::vector<CMatrix> control_derivatives(const SystemParameters& xi) const override;
    bool hermitian() const override { return true; }

private:
    std::vector<int> qubits_{0, 1};
};

ReqcModel reqc_model(double decay_rate = 0.0);

/// Desired evolution U0 on the qubit subspace.
struct TargetGate {
    CMatrix matrix;

    int size() const { return static_cast<int>(matrix.rows()); }
    /// Throws unless matrix is square and unitary to 1e-12.
    void validate() const;
};

/// U0 = |1><1| - |0><0|.
TargetGate phase_gate_target();
TargetGate identity_target(int n);

}  // namespace pulseforge
