#include "pulseforge/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pulseforge/lbfgs.hpp"
#include "pulseforge/parallel.hpp"

namespace pulseforge {

VectorXd ParameterGrid::weight_vector() const {
    VectorXd w(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) w[static_cast<Eigen::Index>(i)] = weight(i);
    return w;
}

void ParameterGrid::validate() const {
    if (points.empty()) throw std::invalid_argument("parameter grid is empty");
    if (!weights.empty() && weights.size() != points.size()) {
        throw std::invalid_argument("parameter grid has " + std::to_string(points.size()) + " points but " +
                                    std::to_string(weights.size()) + " weights");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        points[i].validate();
        if (!(weight(i) > 0.0) || !std::isfinite(weight(i))) {
            throw std::invalid_argument("grid weight " + std::to_string(i) + " must be positive and finite");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (points[j].gamma == points[i].gamma && points[j].delta == points[i].delta) {
                std::ostringstream msg;
                msg << "duplicate grid point (gamma=" << points[i].gamma << ", delta=" << points[i].delta << ")";
                throw std::invalid_argument(msg.str());
            }
        }
    }
}

TargetMap reqc_target_map(double far_detuning) {
    if (!(far_detuning > 0.0)) throw std::invalid_argument("far_detuning must be positive");
    return [far_detuning](const SystemParameters& xi) {
        return std::abs(xi.delta) >= far_detuning ? identity_target(2) : phase_gate_target();
    };
}

ParameterGrid default_reqc_grid() {
    ParameterGrid grid;
    for (double gamma : {0.9, 0.95, 1.0, 1.05, 1.1}) {
        for (double delta : {-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5}) grid.points.push_back({gamma, delta});
    }
    for (double delta : {5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0}) {
        grid.points.push_back({1.0, -delta});
        grid.points.push_back({1.0, delta});
    }
    return grid;
}

GridEvaluation evaluate_grid(const HamiltonianModel& model, const ParameterGrid& grid, const TargetMap& target_map,
                             const FourierParametrization& params, const EvaluationSettings& settings) {
    grid.validate();
    const ControlWaveform waveform = synthesize(params, settings.grid);
    const MatrixXd node_basis = fourier_basis(params.n_harmonics, params.duration, settings.grid.nodes());
    const Eigen::Index per = params.coefficients_per_channel();
    const auto n_points = static_cast<Eigen::Index>(grid.size());

    GridEvaluation out;
    out.values.resize(n_points);
    out.trace_fidelities.resize(n_points);
    out.gradients.resize(n_points, params.n_coefficients());

    parallel_for(grid.size(), settings.threads, [&](std::size_t i) {
        const SystemParameters& xi = grid.points[i];
        WaveformObjective r;
        try {
            r = waveform_objective(model, xi, target_map(xi), waveform, settings.penalty, settings.boundary);
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "grid point " << i << " (gamma=" << xi.gamma << ", delta=" << xi.delta << "): " << e.what();
            throw PropagationError(msg.str());
        }
        const auto row = static_cast<Eigen::Index>(i);
        out.values[row] = r.value;
        out.trace_fidelities[row] = r.trace_fidelity;
        for (int c = 0; c < params.n_controls; ++c) {
            out.gradients.row(row).segment(c * per, per) = (node_basis.transpose() * r.node_gradient.col(c)).transpose();
        }
    });
    return out;
}

AggregateResult aggregate(const VectorXd& values, const MatrixXd& gradients, double sharpness,
                          const VectorXd& weights) {
    if (values.size() == 0) throw std::invalid_argument("aggregate of an empty set");
    if (!(sharpness > 0.0)) throw std::invalid_argument("sharpness must be positive");
    if (gradients.rows() != values.size()) throw std::invalid_argument("gradient rows must match values");
    if (weights.size() != 0 && weights.size() != values.size()) throw std::invalid_argument("weights size mismatch");

    const double top = values.maxCoeff();
    VectorXd e = (sharpness * (values.array() - top)).exp();
    if (weights.size() != 0) e.array() *= weights.array();
    const double sum = e.sum();

    AggregateResult r;
    r.value = top + std::log(sum) / sharpness;
    r.softmax = e / sum;
    r.gradient = gradients.transpose() * r.softmax;
    return r;
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::gradient_converged: return "gradient_converged";
        case Termination::step_converged: return "step_converged";
        case Termination::max_iterations: return "max_iterations";
        case Termination::line_search_failed: return "line_search_failed";
    }
    return "unknown";
}

namespace {

/// Squared-modulus bound on every (real, imaginary) channel pair, sampled on
/// a fine grid, folded into the objective with a PHR augmented Lagrangian.
class AmplitudeConstraints {
public:
    AmplitudeConstraints(const FourierParametrization& shape, int n_samples)
        : per_(shape.coefficients_per_channel()), pairs_(shape.n_controls / 2), bound_(shape.amplitude_bound) {
        const TimeGrid fine(shape.duration, n_samples, Integrator::midpoint);
        basis_ = fourier_basis(shape.n_harmonics, shape.duration, fine.points().head(n_samples));
        multipliers_ = MatrixXd::Zero(basis_.rows(), pairs_);
    }

    double penalty() const { return penalty_; }
    void scale_penalty(double factor) { penalty_ *= factor; }
    void set_penalty(double value) { penalty_ = value; }

    /// g = |pair|^2 / bound^2 - 1 at every sample.
    MatrixXd residuals(const VectorXd& x) const {
        MatrixXd g(basis_.rows(), pairs_);
        for (int p = 0; p < pairs_; ++p) {
            const VectorXd re = basis_ * x.segment(2 * p * per_, per_);
            const VectorXd im = basis_ * x.segment((2 * p + 1) * per_, per_);
            g.col(p) = (re.array().square() + im.array().square()) / (bound_ * bound_) - 1.0;
        }
        return g;
    }

    /// Largest max(0, |pair| / bound - 1).
    double violation(const VectorXd& x) const {
        if (pairs_ == 0) return 0.0;
        return std::max(0.0, std::sqrt(residuals(x).maxCoeff() + 1.0) - 1.0);
    }

    /// Adds the Lagrangian term and its gradient; returns the term.
    double add_to(const VectorXd& x, VectorXd& grad) const {
        double term = 0.0;
        for (int p = 0; p < pairs_; ++p) {
            const VectorXd re = basis_ * x.segment(2 * p * per_, per_);
            const VectorXd im = basis_ * x.segment((2 * p + 1) * per_, per_);
            const VectorXd g = (re.array().square() + im.array().square()) / (bound_ * bound_) - 1.0;
            const VectorXd shifted = (multipliers_.col(p) + penalty_ * g).cwiseMax(0.0);
            term += (shifted.squaredNorm() - multipliers_.col(p).squaredNorm()) / (2.0 * penalty_);
            const VectorXd scale = shifted * (2.0 / (bound_ * bound_));
            grad.segment(2 * p * per_, per_) += basis_.transpose() * scale.cwiseProduct(re);
            grad.segment((2 * p + 1) * per_, per_) += basis_.transpose() * scale.cwiseProduct(im);
        }
        return term;
    }

    void update_multipliers(const VectorXd& x) {
        multipliers_ = (multipliers_ + penalty_ * residuals(x)).cwiseMax(0.0);
    }

    /// Scales every pair uniformly so it sits on or below the bound.
    void restore(VectorXd& x) const {
        const MatrixXd g = residuals(x);
        for (int p = 0; p < pairs_; ++p) {
            const double peak = std::sqrt(g.col(p).maxCoeff() + 1.0);
            if (peak > 1.0) {
                x.segment(2 * p * per_, 2 * per_) /= peak * (1.0 + 1e-12);
            }
        }
    }

private:
    Eigen::Index per_;
    int pairs_;
    double bound_;
    MatrixXd basis_;
    MatrixXd multipliers_;
    double penalty_ = 10.0;
};

Termination from_status(LbfgsStatus s) {
    switch (s) {
        case LbfgsStatus::gradient_converged: return Termination::gradient_converged;
        case LbfgsStatus::step_converged: return Termination::step_converged;
        case LbfgsStatus::line_search_failed: return Termination::line_search_failed;
        default: return Termination::max_iterations;
    }
}

}  // namespace

MinimaxResult optimize(const GridObjective& objective, const FourierParametrization& initial,
                       const OptimizerOptions& options, const VectorXd& point_weights) {
    initial.validate();
    if (options.sharpness_schedule.empty()) throw std::invalid_argument("sharpness schedule is empty");
    for (double p : options.sharpness_schedule) {
        if (!(p > 0.0)) throw std::invalid_argument("sharpness values must be positive");
    }
    if (options.max_iterations < 0) throw std::invalid_argument("max_iterations must be non-negative");
    if (options.constraint_oversampling < 1) throw std::invalid_argument("constraint_oversampling must be >= 1");
    const bool constrained = options.enforce_amplitude && initial.n_controls >= 2;
    if (constrained && initial.n_controls % 2 != 0) {
        throw std::invalid_argument("amplitude bound needs an even number of control channels");
    }

    FourierParametrization params = initial;
    AmplitudeConstraints constraints(initial, options.n_steps * options.constraint_oversampling);
    constraints.set_penalty(options.initial_penalty);

    MinimaxResult result;
    double sharpness = options.sharpness_schedule.front();

    struct Cache {
        VectorXd x;
        GridEvaluation eval;
        AggregateResult agg;
    } cache;

    auto evaluate = [&](const VectorXd& x) -> const Cache& {
        if (cache.x.size() == x.size() && cache.x == x) return cache;
        params.set_flat(x);
        cache.eval = objective(params);
        ++result.evaluations;
        if (cache.eval.values.size() == 0 || cache.eval.gradients.cols() != x.size()) {
            throw std::runtime_error("grid objective returned malformed output");
        }
        cache.agg = aggregate(cache.eval.values, cache.eval.gradients, sharpness, point_weights);
        cache.x = x;
        return cache;
    };

    auto merit = [&](const VectorXd& x, VectorXd& grad) {
        const Cache& c = evaluate(x);
        grad = c.agg.gradient;
        double value = c.agg.value;
        if (constrained) value += constraints.add_to(x, grad);
        return value;
    };

    auto record = [&](int iteration, const VectorXd& x, double merit_value, const VectorXd& grad) {
        const Cache& c = evaluate(x);
        HistoryEntry h;
        h.iteration = iteration;
        h.j_max = c.eval.values.maxCoeff();
        h.aggregate = c.agg.value;
        h.grad_norm = grad.norm();
        h.max_violation = constrained ? constraints.violation(x) : 0.0;
        h.sharpness = sharpness;
        h.merit = merit_value;
        result.history.push_back(h);
        if (options.progress) options.progress(h);
    };

    VectorXd x = initial.flat();
    {
        VectorXd g;
        const double m = merit(x, g);
        record(0, x, m, g);
    }

    int used = 0;
    LbfgsStatus last_status = LbfgsStatus::max_iterations;
    const auto n_stages = static_cast<int>(options.sharpness_schedule.size());
    for (int stage = 0; stage < n_stages; ++stage) {
        sharpness = options.sharpness_schedule[static_cast<std::size_t>(stage)];
        cache.x.resize(0);
        const int stage_end = used + (options.max_iterations - used) / (n_stages - stage);
        double previous_violation = std::numeric_limits<double>::infinity();
        const int rounds = constrained ? std::max(1, options.max_constraint_rounds) : 1;
        for (int round = 0; round < rounds; ++round) {
            LbfgsOptions lo;
            lo.memory = options.lbfgs_memory;
            lo.max_iterations = std::max(0, stage_end - used);
            lo.gradient_tolerance = options.gradient_tolerance;
            lo.step_tolerance = options.step_tolerance;
            const int offset = used;
            const LbfgsResult r = minimize_lbfgs(merit, x, lo, std::nullopt,
                                                 [&](int it, const VectorXd& xi, double f, const VectorXd& g) {
                                                     record(offset + it, xi, f, g);
                                                     return true;
                                                 });
            x = r.x;
            used += r.iterations;
            last_status = r.status;
            if (!constrained) break;
            const double v = constraints.violation(x);
            if (v <= options.amplitude_tolerance) break;
            constraints.update_multipliers(x);
            if (v > 0.25 * previous_violation) constraints.scale_penalty(10.0);
            previous_violation = v;
            cache.x.resize(0);
            if (used >= stage_end && stage + 1 < n_stages) break;
            if (used >= options.max_iterations) break;
        }
    }

    if (constrained && constraints.violation(x) > options.amplitude_tolerance) constraints.restore(x);

    params.set_flat(x);
    const GridEvaluation final_eval = objective(params);
    ++result.evaluations;
    result.coefficients = params;
    result.per_point_J = final_eval.values;
    result.J_max = final_eval.values.maxCoeff();
    result.max_violation = constrained ? constraints.violation(x) : 0.0;
    result.termination = from_status(last_status);
    return result;
}

MinimaxResult optimize(const HamiltonianModel& model, const ParameterGrid& grid, const TargetMap& target_map,
                       const FourierParametrization& initial, const OptimizerOptions& options,
                       const EvaluationSettings& settings) {
    grid.validate();
    if (initial.n_controls != model.n_controls()) {
        throw std::invalid_argument("parametrization has " + std::to_string(initial.n_controls) +
                                    " channels but the model expects " + std::to_string(model.n_controls()));
    }
    OptimizerOptions opts = options;
    opts.n_steps = settings.grid.n_steps;
    GridObjective fn = [&](const FourierParametrization& p) {
        return evaluate_grid(model, grid, target_map, p, settings);
    };
    return optimize(fn, initial, opts, grid.weights.empty() ? VectorXd{} : grid.weight_vector());
}

FourierParametrization naive_initial_guess(int n_controls, int n_harmonics, double duration, double amplitude_bound,
                                           std::uint64_t seed, double perturbation) {
    FourierParametrization p = FourierParametrization::zeros(n_controls, n_harmonics, duration, amplitude_bound);
    std::mt19937_64 rng(seed);
    for (Eigen::Index c = 0; c < p.coefficients.rows(); ++c) {
        for (Eigen::Index k = 0; k < p.coefficients.cols(); ++k) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            p.coefficients(c, k) = perturbation * (2.0 * u - 1.0);
        }
    }
    p.coefficients(0, 0) = 2.0 * std::numbers::pi / duration;
    p.validate();
    return p;
}

double relative_amplitude_violation(const FourierParametrization& params, int n_steps, int oversampling) {
    if (params.n_controls % 2 != 0) throw std::invalid_argument("amplitude bound needs channel pairs");
    AmplitudeConstraints c(params, n_steps * oversampling);
    return c.violation(params.flat());
}

void write_history_csv(std::ostream& out, const std::vector<HistoryEntry>& history) {
    out << "iter,J_max,aggregate,grad_norm,max_violation\n";
    out.precision(12);
    for (const auto& h : history) {
        out << h.iteration << ',' << h.j_max << ',' << h.aggregate << ',' << h.grad_norm << ',' << h.max_violation
            << '\n';
    }
}

}  // namespace pulseforge
