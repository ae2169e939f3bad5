#pragma once

#include <functional>
#include <vector>

#include "pulseforge/control.hpp"
#include "pulseforge/system_model.hpp"

namespace pulseforge {

/// exp(-i tau H) for one integrator stage, kept in factored form so the
/// exact directional derivative can be taken later.
struct StageExponential {
    CMatrix propagator;
    CMatrix eigenvectors;      ///< Hermitian path: H = V diag(w) V^dagger
    RSmallVector eigenvalues;
    CMatrix generator;         ///< general path: H itself
    double tau = 0.0;
    bool hermitian = true;
};

/// Hermitian H uses an eigendecomposition; otherwise scaling-and-squaring.
StageExponential exponentiate(const CMatrix& h, double tau, bool hermitian);

/// d/ds exp(-i tau (H + s dH)) at s = 0 (exact Frechet derivative).
CMatrix exp_derivative(const StageExponential& stage, const CMatrix& dh);

/// Equally sized square matrices stored side by side in one buffer.
class MatrixSequence {
public:
    MatrixSequence() = default;
    MatrixSequence(Eigen::Index dim, Eigen::Index count) : dim_(dim), data_(dim, dim * count) {}

    Eigen::Index size() const { return dim_ == 0 ? 0 : data_.cols() / dim_; }
    Eigen::Index dim() const { return dim_; }

    auto operator[](Eigen::Index i) { return data_.middleCols(i * dim_, dim_); }
    auto operator[](Eigen::Index i) const { return data_.middleCols(i * dim_, dim_); }
    auto back() const { return (*this)[size() - 1]; }

private:
    Eigen::Index dim_ = 0;
    Eigen::MatrixXcd data_;
};

/// U(t) on every grid point plus the per-stage factors needed by the adjoint.
struct EvolutionTrajectory {
    TimeGrid grid;
    MatrixSequence operators;     ///< U(t_i), i = 0..n_steps
    MatrixSequence stage_states;  ///< state before every stage, then U(T)
    MatrixSequence propagators;   ///< exp(-i tau_k H_k) per stage
    MatrixSequence eigenvectors;  ///< Hermitian models: eigenbasis of H_k
    MatrixXd eigenvalues;         ///< Hermitian models: dim x stages
    std::vector<CMatrix> generators;  ///< non-Hermitian models: H_k
    VectorXd taus;
    bool hermitian = true;

    CMatrix final_operator() const { return operators.back(); }
    /// Factored exponential of stage k.
    StageExponential stage(Eigen::Index k) const;
};

/// Lambda(t) on the same grid, propagated backward from Lambda(T).
struct AdjointTrajectory {
    TimeGrid grid;
    MatrixSequence operators;     ///< Lambda(t_i)
    MatrixSequence stage_states;  ///< aligned with EvolutionTrajectory::stage_states
};

/// Per-node control sensitivity divided by the node's quadrature weight.
///
/// `values(r, c) * weights[r]` is exactly dJ/d eps_c(node r) for the discrete
/// dynamics; as the grid is refined `values` tends to 2 Im tr(Lambda^dagger
/// dH/d eps_c U).
struct GradientDensity {
    VectorXd times;
    VectorXd weights;
    MatrixXd values;

    MatrixXd sensitivities() const { return values.array().colwise() * weights.array(); }
};

EvolutionTrajectory propagate_forward(const HamiltonianModel& model, const SystemParameters& xi,
                                      const ControlWaveform& waveform);

/// Backward sweep that reuses the stage exponentials of a forward run.
AdjointTrajectory propagate_adjoint(const EvolutionTrajectory& forward, const CMatrix& boundary);

AdjointTrajectory propagate_adjoint(const HamiltonianModel& model, const SystemParameters& xi,
                                    const ControlWaveform& waveform, const CMatrix& boundary);

GradientDensity gradient_integrand(const HamiltonianModel& model, const SystemParameters& xi,
                                   const EvolutionTrajectory& forward, const AdjointTrajectory& adjoint);

/// Applies steps [step_begin, step_end) of the waveform to `initial`.
CMatrix propagate_steps(const HamiltonianModel& model, const SystemParameters& xi, const ControlWaveform& waveform,
                        const CMatrix& initial, int step_begin, int step_end);

/// max-norm of U_N(T) - U_2N(T) where `make_waveform` samples the same
/// controls on the given grid.
double step_doubling_error(const HamiltonianModel& model, const SystemParameters& xi,
                           const std::function<ControlWaveform(const TimeGrid&)>& make_waveform,
                           const TimeGrid& grid);

/// max_i ||U(t_i)^dagger U(t_i) - I||_max.
double unitarity_defect(const EvolutionTrajectory& trajectory);

}  // namespace pulseforge
