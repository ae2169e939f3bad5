#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pulseforge/control.hpp"
#include "pulseforge/objective.hpp"
#include "pulseforge/system_model.hpp"

namespace pulseforge {

/// The discrete parameter set X' with optional positive weights.
struct ParameterGrid {
    std::vector<SystemParameters> points;
    std::vector<double> weights;  ///< empty means all ones

    std::size_t size() const { return points.size(); }
    double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
    VectorXd weight_vector() const;
    /// Throws on an empty grid, duplicate points or non-positive weights.
    void validate() const;
};

using TargetMap = std::function<TargetGate(const SystemParameters&)>;

/// Phase gate inside the channel, identity for |delta| >= far_detuning.
TargetMap reqc_target_map(double far_detuning = 5.0);

/// 35-point (gamma, delta) lattice around the ideal ion plus 14 far-detuned points.
ParameterGrid default_reqc_grid();

/// J and dJ/dcoefficients at every grid point.
struct GridEvaluation {
    VectorXd values;
    MatrixXd gradients;  ///< points x coefficients
    VectorXd trace_fidelities;
};

/// Maps coefficients to per-point objectives; lets the optimizer run on
/// something other than the quantum model.
using GridObjective = std::function<GridEvaluation(const FourierParametrization&)>;

struct EvaluationSettings {
    TimeGrid grid;
    PenaltySpec penalty;
    BoundaryKind boundary = BoundaryKind::standard;
    int threads = 1;
};

/// Independent objective_and_gradient at every point; a propagation failure
/// is rethrown naming the offending (gamma, delta).
GridEvaluation evaluate_grid(const HamiltonianModel& model, const ParameterGrid& grid, const TargetMap& target_map,
                             const FourierParametrization& params, const EvaluationSettings& settings);

struct AggregateResult {
    double value = 0.0;
    VectorXd gradient;
    VectorXd softmax;  ///< weight of every point in the gradient
};

/// (1/p) log sum_i w_i exp(p J_i) and its gradient, shifted by max J.
AggregateResult aggregate(const VectorXd& values, const MatrixXd& gradients, double sharpness,
                          const VectorXd& weights = {});

struct HistoryEntry {
    int iteration = 0;
    double j_max = 0.0;
    double aggregate = 0.0;
    double grad_norm = 0.0;
    double max_violation = 0.0;
    double sharpness = 0.0;
    double merit = 0.0;  ///< aggregate plus the amplitude-constraint term
};

enum class Termination { gradient_converged, step_converged, max_iterations, line_search_failed };

std::string to_string(Termination t);

struct OptimizerOptions {
    std::vector<double> sharpness_schedule{10.0, 1e2, 1e3, 1e4};
    double gradient_tolerance = 1e-8;
    double step_tolerance = 1e-12;
    int max_iterations = 2000;
    int lbfgs_memory = 20;
    /// Amplitude constraints are sampled on a grid this much finer than the
    /// propagation grid.
    int constraint_oversampling = 4;
    double amplitude_tolerance = 1e-6;
    int max_constraint_rounds = 6;
    double initial_penalty = 10.0;
    bool enforce_amplitude = true;
    int n_steps = 2048;  ///< used only to size the constraint grid
    std::function<void(const HistoryEntry&)> progress;
};

struct MinimaxResult {
    FourierParametrization coefficients;
    VectorXd per_point_J;
    double J_max = 0.0;
    std::vector<HistoryEntry> history;
    Termination termination = Termination::max_iterations;
    int evaluations = 0;
    double max_violation = 0.0;  ///< relative, on the constraint grid

    bool converged() const {
        return termination == Termination::gradient_converged || termination == Termination::step_converged;
    }
};

/// min over coefficients of max over the grid, via log-sum-exp smoothing
/// with sharpness continuation, limited-memory quasi-Newton steps and an
/// augmented Lagrangian for the pair-amplitude bound.
MinimaxResult optimize(const GridObjective& objective, const FourierParametrization& initial,
                       const OptimizerOptions& options, const VectorXd& point_weights = {});

MinimaxResult optimize(const HamiltonianModel& model, const ParameterGrid& grid, const TargetMap& target_map,
                       const FourierParametrization& initial, const OptimizerOptions& options,
                       const EvaluationSettings& settings);

/// Resonant 2 pi pulse on the first channel as a DC term, plus uniform
/// perturbations of size `perturbation` on every other coefficient.
FourierParametrization naive_initial_guess(int n_controls, int n_harmonics, double duration, double amplitude_bound,
                                           std::uint64_t seed = 0x5EED, double perturbation = 1e-3);

/// Per-pair relative amplitude violation max(0, |pair| / bound - 1) on a grid
/// `oversampling` times finer than n_steps.
double relative_amplitude_violation(const FourierParametrization& params, int n_steps, int oversampling = 4);

/// CSV `iter,J_max,aggregate,grad_norm,max_violation`.
void write_history_csv(std::ostream& out, const std::vector<HistoryEntry>& history);

}  // namespace pulseforge
