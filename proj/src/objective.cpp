#include "pulseforge/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pulseforge/lbfgs.hpp"

namespace pulseforge {
namespace {

void check_qubits(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    if (static_cast<int>(qubits.size()) != target.size()) {
        throw std::invalid_argument("target size does not match the number of qubit indices");
    }
    for (int q : qubits) {
        if (q < 0 || q >= u_final.rows()) throw std::invalid_argument("qubit index outside the Hilbert space");
    }
}

// Real parameters x (2n - 1 of them) -> v with v_0 = x_0 real.
CVector unpack_state(const VectorXd& x, int n) {
    CVector v(n);
    v[0] = x[0];
    for (int k = 1; k < n; ++k) v[k] = Complex(x[2 * k - 1], x[2 * k]);
    return v;
}

}  // namespace

QubitRestriction qubit_restriction(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    check_qubits(target, u_final, qubits);
    const auto n = static_cast<Eigen::Index>(qubits.size());
    CMatrix block(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) block(r, c) = u_final(qubits[r], qubits[c]);
    }
    return {target.matrix.adjoint() * block};
}

void PenaltySpec::validate() const {
    if (!std::isfinite(weight) || weight < 0.0) throw std::invalid_argument("penalty weight must be finite and >= 0");
}

double trace_fidelity(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    return trace_fidelity(qubit_restriction(target, u_final, qubits).matrix);
}

double worst_case_fidelity(const CMatrix& o, const WorstCaseOptions& options) {
    const int n = static_cast<int>(o.rows());
    if (n == 1) return std::abs(o(0, 0));
    const CMatrix oh = o.adjoint();

    // f(v) = |q|^2 with q = v^+ O v / v^+ v; Wirtinger gradient
    // df/dv* = (conj(q) (O v - q v) + q (O^+ v - conj(q) v)) / |v|^2.
    ValueGradientFn fn = [&](const VectorXd& x, VectorXd& grad) {
        const CVector v = unpack_state(x, n);
        const double norm2 = v.squaredNorm();
        const CVector ov = o * v;
        const Complex q = v.dot(ov) / norm2;
        const CVector g = (std::conj(q) * (ov - q * v) + q * (oh * v - std::conj(q) * v)) / norm2;
        grad.resize(x.size());
        grad[0] = 2.0 * g[0].real();
        for (int k = 1; k < n; ++k) {
            grad[2 * k - 1] = 2.0 * g[k].real();
            grad[2 * k] = 2.0 * g[k].imag();
        }
        return std::norm(q);
    };

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal;
    LbfgsOptions lopt;
    lopt.max_iterations = 400;
    lopt.gradient_tolerance = 1e-14;
    lopt.step_tolerance = 1e-15;

    double best = std::numeric_limits<double>::infinity();
    Complex best_q = 1.0;
    for (int s = 0; s < options.starts; ++s) {
        VectorXd x(2 * n - 1);
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
        x[0] = std::abs(x[0]) + 0.1;
        const LbfgsResult r = minimize_lbfgs(fn, x, lopt);
        const CVector v = unpack_state(r.x, n);
        const Complex q = v.dot(o * v) / v.squaredNorm();
        if (std::abs(q) < best) {
            best = std::abs(q);
            best_q = q;
        }
    }

    // The numerical range is convex, so lambda_min(Re(e^{-i theta} O)) is a
    // lower bound on F for every theta, attaining F at the direction of the
    // nearest point. The local search stalls near |q| ~ 1e-10 when the
    // minimum is a degenerate zero; the lower bound does not.
    auto lower = [&](double theta) {
        const CMatrix rotated = std::polar(1.0, -theta) * o;
        const CMatrix herm = 0.5 * (rotated + rotated.adjoint());
        return Eigen::SelfAdjointEigenSolver<CMatrix>(herm, Eigen::EigenvaluesOnly).eigenvalues()[0];
    };
    auto refine = [&](double lo, double hi) {
        const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = hi - ratio * (hi - lo), b = lo + ratio * (hi - lo);
        double fa = lower(a), fb = lower(b);
        for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
            if (fa < fb) {
                lo = a;
                a = b;
                fa = fb;
                b = lo + ratio * (hi - lo);
                fb = lower(b);
            } else {
                hi = b;
                b = a;
                fb = fa;
                a = hi - ratio * (hi - lo);
                fa = lower(a);
            }
        }
        return std::max(fa, fb);
    };
    constexpr int scan = 64;
    const double cell = 2.0 * std::numbers::pi / scan;
    double bound = -std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (int k = 0; k < scan; ++k) {
        const double value = lower(k * cell);
        if (value > bound) {
            bound = value;
            best_theta = k * cell;
        }
    }
    bound = std::max(bound, refine(best_theta - cell, best_theta + cell));
    const double seed_theta = std::arg(best_q);
    bound = std::max(bound, refine(seed_theta - 0.05, seed_theta + 0.05));

    best = std::min(best, std::max(bound, 0.0));
    return std::min(best, 1.0);
}

double worst_case_fidelity(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    return worst_case_fidelity(qubit_restriction(target, u_final, qubits).matrix);
}

FidelityReport fidelity_report(const CMatrix& restriction) {
    FidelityReport r;
    r.trace_fidelity = std::min(1.0, trace_fidelity(restriction));
    r.worst_case_fidelity = worst_case_fidelity(restriction);
    const double n = static_cast<double>(restriction.rows());
    r.bound_gap = n * (1.0 - r.trace_fidelity) - (1.0 - r.worst_case_fidelity);
    return r;
}

FidelityReport fidelity_report(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    return fidelity_report(qubit_restriction(target, u_final, qubits).matrix);
}

bool check_bound(const FidelityReport& report, int n) {
    return 1.0 - report.worst_case_fidelity <= n * (1.0 - report.trace_fidelity) + 1e-9;
}

double terminal_cost(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    const double t = trace_fidelity(target, u_final, qubits);
    return 1.0 - t * t;
}

CMatrix adjoint_boundary(const TargetGate& target, const CMatrix& u_final, const std::vector<int>& qubits) {
    const QubitRestriction o = qubit_restriction(target, u_final, qubits);
    const double n = static_cast<double>(o.n());
    const Complex overlap = o.matrix.trace();
    CMatrix boundary = CMatrix::Zero(u_final.rows(), u_final.cols());
    for (std::size_t r = 0; r < qubits.size(); ++r) {
        for (std::size_t c = 0; c < qubits.size(); ++c) {
            boundary(qubits[r], qubits[c]) = -(overlap / (n * n)) * target.matrix(static_cast<Eigen::Index>(r),
                                                                                    static_cast<Eigen::Index>(c));
        }
    }
    return boundary;
}

CMatrix optimized_adjoint_boundary(const TargetGate& target, const EvolutionTrajectory& forward,
                                   const std::vector<int>& qubits) {
    if (!forward.hermitian) {
        throw std::invalid_argument("optimized adjoint boundary requires a Hermitian Hamiltonian");
    }
    const CMatrix u = forward.final_operator();
    CMatrix boundary = adjoint_boundary(target, u, qubits);
    for (Eigen::Index k = 0; k < boundary.cols(); ++k) {
        const double alpha = u.col(k).dot(boundary.col(k)).real();
        boundary.col(k) -= alpha * u.col(k);
    }
    return boundary;
}

WaveformObjective waveform_objective(const HamiltonianModel& model, const SystemParameters& xi,
                                     const TargetGate& target, const ControlWaveform& waveform,
                                     const PenaltySpec& penalty, BoundaryKind boundary) {
    penalty.validate();
    const auto& qubits = model.qubit_indices();
    const EvolutionTrajectory forward = propagate_forward(model, xi, waveform);
    const CMatrix u = forward.final_operator();

    WaveformObjective out;
    out.final_operator = u;
    out.trace_fidelity = trace_fidelity(target, u, qubits);
    out.value = 1.0 - out.trace_fidelity * out.trace_fidelity;

    const CMatrix lambda_t = boundary == BoundaryKind::optimized ? optimized_adjoint_boundary(target, forward, qubits)
                                                                 : adjoint_boundary(target, u, qubits);
    const AdjointTrajectory adjoint = propagate_adjoint(forward, lambda_t);
    out.node_gradient = gradient_integrand(model, xi, forward, adjoint).sensitivities();

    if (penalty.form == PenaltyForm::quadratic && penalty.weight > 0.0) {
        const VectorXd w = waveform.grid.node_weights();
        out.value += penalty.weight * (waveform.node_samples.rowwise().squaredNorm().dot(w));
        out.node_gradient += 2.0 * penalty.weight * (waveform.node_samples.array().colwise() * w.array()).matrix();
    }
    return out;
}

ObjectiveResult objective_and_gradient(const HamiltonianModel& model, const SystemParameters& xi,
                                       const TargetGate& target, const FourierParametrization& params,
                                       const PenaltySpec& penalty, const TimeGrid& grid, BoundaryKind boundary) {
    const ControlWaveform waveform = synthesize(params, grid);
    const WaveformObjective w = waveform_objective(model, xi, target, waveform, penalty, boundary);
    const SynthesisJacobian jac = synthesis_jacobian(params, grid.nodes());
    return {w.value, w.trace_fidelity, jac.transpose_apply(w.node_gradient)};
}

ObjectiveResult objective_and_gradient(const HamiltonianModel& model, const SystemParameters& xi,
                                       const TargetGate& target, const FourierParametrization& params,
                                       const PenaltySpec& penalty, int n_steps, BoundaryKind boundary) {
    return objective_and_gradient(model, xi, target, params, penalty, TimeGrid(params.duration, n_steps), boundary);
}

}  // namespace pulseforge
