#pragma once

#include <cstdint>
#include <vector>

#include "pulseforge/control.hpp"
#include "pulseforge/propagator.hpp"
#include "pulseforge/system_model.hpp"

namespace pulseforge {

/// O = restriction of U0^dagger U(T) to the qubit subspace.
struct QubitRestriction {
    CMatrix matrix;
    int n() const { return static_cast<int>(matrix.rows()); }
};

QubitRestriction qubit_restriction(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);

struct FidelityReport {
    double trace_fidelity = 0.0;
    double worst_case_fidelity = 0.0;
    double bound_gap = 0.0;  ///< n (1 - T) - (1 - F), non-negative up to rounding
};

enum class PenaltyForm { none, quadratic };

/// Running cost l(eps) = weight * |eps|^2 (or nothing).
struct PenaltySpec {
    PenaltyForm form = PenaltyForm::none;
    double weight = 0.0;

    void validate() const;
};

/// (1/n) |tr O|.
template <typename Derived>
double trace_fidelity(const Eigen::MatrixBase<Derived>& restriction) {
    return std::abs(restriction.trace()) / static_cast<double>(restriction.rows());
}

double trace_fidelity(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);

struct WorstCaseOptions {
    int starts = 16;
    std::uint64_t seed = 0x5EED;
};

/// min over unit psi of |<psi|O|psi>|, by multi-start quasi-Newton descent
/// over states whose first amplitude is real, tightened with the lower bound
/// lambda_min(Re(e^{-i theta} O)) of the convex numerical range.
double worst_case_fidelity(const CMatrix& restriction, const WorstCaseOptions& options = {});
double worst_case_fidelity(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);

FidelityReport fidelity_report(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);
FidelityReport fidelity_report(const CMatrix& restriction);

/// 1 - F <= n (1 - T), with 1e-9 slack.
bool check_bound(const FidelityReport& report, int n);

/// phi = 1 - T^2.
double terminal_cost(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);

/// dphi/dU^dagger = -(1/n^2) tr(U0^dagger U(T)) U0, embedded on the qubit block.
CMatrix adjoint_boundary(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits);

/// Removes from every boundary column its real component along the matching
/// column of U(T), which leaves the gradient unchanged for Hermitian H and
/// minimizes the column norm.
CMatrix optimized_adjoint_boundary(const TargetGate& target, const EvolutionTrajectory& forward,
                                   const std::vector<int>& qubits);

enum class BoundaryKind { standard, optimized };

/// J and dJ/d(node samples) for an already sampled waveform.
struct WaveformObjective {
    double value = 0.0;
    double trace_fidelity = 0.0;
    MatrixXd node_gradient;  ///< nodes x channels
    CMatrix final_operator;
};

WaveformObjective waveform_objective(const HamiltonianModel& model, const SystemParameters& xi,
                                     const TargetGate& target, const ControlWaveform& waveform,
                                     const PenaltySpec& penalty = {}, BoundaryKind boundary = BoundaryKind::standard);

struct ObjectiveResult {
    double value = 0.0;
    double trace_fidelity = 0.0;
    VectorXd gradient;  ///< dJ / d(flat Fourier coefficients)
};

/// J = phi(U(T)) + int l dt and its exact gradient for the discretized dynamics.
ObjectiveResult objective_and_gradient(const HamiltonianModel& model, const SystemParameters& xi,
                                       const TargetGate& target, const FourierParametrization& params,
                                       const PenaltySpec& penalty, const TimeGrid& grid,
                                       BoundaryKind boundary = BoundaryKind::standard);
ObjectiveResult objective_and_gradient(const HamiltonianModel& model, const SystemParameters& xi,
                                       const TargetGate& target, const FourierParametrization& params,
                                       const PenaltySpec& penalty, int n_steps,
                                       BoundaryKind boundary = BoundaryKind::standard);

}  // namespace pulseforge
