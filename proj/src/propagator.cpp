#include "pulseforge/propagator.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace pulseforge {
namespace {

const Complex kI(0.0, 1.0);

void check_inputs(const HamiltonianModel& model, const ControlWaveform& waveform) {
    if (waveform.n_channels() != model.n_controls()) {
        throw std::invalid_argument("waveform channel count does not match the model");
    }
    const auto expected_nodes = static_cast<Eigen::Index>(waveform.grid.n_steps) * TimeGrid::nodes_per_step;
    if (waveform.node_samples.rows() != expected_nodes || waveform.samples.rows() != waveform.grid.n_steps + 1) {
        throw std::invalid_argument("waveform samples are inconsistent with its time grid");
    }
}

// sin(x) / x without the removable singularity.
double sinc(double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

// Fixed-size kernels for the common dimensions; Dim == Eigen::Dynamic falls
// back to the stack-bounded CMatrix.
template <int Dim>
struct Kernel {
    using Mat = std::conditional_t<Dim == Eigen::Dynamic, CMatrix, Eigen::Matrix<Complex, Dim, Dim>>;
    using RVec = std::conditional_t<Dim == Eigen::Dynamic, RSmallVector, Eigen::Matrix<double, Dim, 1>>;
    using CVec = std::conditional_t<Dim == Eigen::Dynamic, CVector, Eigen::Matrix<Complex, Dim, 1>>;

    // Divided differences of s -> exp(-i tau s) on the eigenvalues, times -i tau.
    static Mat divided_differences(const RVec& w, double tau) {
        const auto d = w.size();
        Mat phi(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index k = 0; k < d; ++k) {
                phi(j, k) = std::exp(-kI * (0.5 * tau * (w[j] + w[k]))) * sinc(0.5 * tau * (w[j] - w[k]));
            }
        }
        return phi;
    }

    struct Factor {
        Mat propagator;
        Mat eigenvectors;
        RVec eigenvalues;
    };

    static Factor hermitian_exp(const Mat& h, double tau) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(h);
        Factor f{Mat(), eig.eigenvectors(), eig.eigenvalues()};
        CVec phases(h.rows());
        for (Eigen::Index j = 0; j < h.rows(); ++j) phases[j] = std::exp(-kI * (tau * f.eigenvalues[j]));
        f.propagator = f.eigenvectors * phases.asDiagonal() * f.eigenvectors.adjoint();
        return f;
    }

    static void forward(const HamiltonianModel& model, const SystemParameters& xi, const ControlWaveform& waveform,
                        EvolutionTrajectory& traj) {
        const auto stages = waveform.grid.stages();
        const auto per_step = static_cast<Eigen::Index>(stages.size());
        const double dt = waveform.grid.dt();
        const int d = model.dimension();
        VectorXd eps(waveform.n_channels());
        Mat u = Mat::Identity(d, d);
        traj.operators[0] = u;
        Eigen::Index k = 0;
        for (int i = 0; i < waveform.grid.n_steps; ++i) {
            for (const Stage& stage : stages) {
                eps = stage.mix[0] * waveform.node_samples.row(2 * i).transpose() +
                      stage.mix[1] * waveform.node_samples.row(2 * i + 1).transpose();
                const CMatrix h = model.evaluate(xi, eps);
                if (!h.allFinite()) {
                    throw PropagationError("non-finite Hamiltonian at step " + std::to_string(i) + " (gamma=" +
                                           std::to_string(xi.gamma) + ", delta=" + std::to_string(xi.delta) + ")");
                }
                const double tau = stage.fraction * dt;
                traj.stage_states[k] = u;
                traj.taus[k] = tau;
                if (traj.hermitian) {
                    const Factor f = hermitian_exp(Mat(h), tau);
                    traj.propagators[k] = f.propagator;
                    traj.eigenvectors[k] = f.eigenvectors;
                    traj.eigenvalues.col(k) = f.eigenvalues;
                    u = f.propagator * u;
                } else {
                    const StageExponential s = exponentiate(h, tau, false);
                    traj.propagators[k] = s.propagator;
                    traj.generators.push_back(h);
                    u = Mat(s.propagator) * u;
                }
                ++k;
                if (k % per_step == 0) traj.operators[k / per_step] = u;
            }
        }
        traj.stage_states[k] = u;
    }

    static void backward(const EvolutionTrajectory& forward, const CMatrix& boundary, AdjointTrajectory& adj) {
        const Eigen::Index n_stages = forward.propagators.size();
        const auto per_step = static_cast<Eigen::Index>(forward.grid.stages().size());
        Mat lambda = boundary;
        adj.stage_states[n_stages] = lambda;
        adj.operators[forward.grid.n_steps] = lambda;
        for (Eigen::Index k = n_stages; k-- > 0;) {
            const Mat e = forward.propagators[k];
            lambda = e.adjoint() * lambda;
            adj.stage_states[k] = lambda;
            if (k % per_step == 0) adj.operators[k / per_step] = lambda;
        }
    }

    static void gradient(const std::vector<CMatrix>& derivs, const EvolutionTrajectory& forward,
                         const AdjointTrajectory& adjoint, MatrixXd& values) {
        const auto m = static_cast<Eigen::Index>(derivs.size());
        std::vector<Mat> dh(derivs.begin(), derivs.end());
        const auto stages = forward.grid.stages();
        const auto per_step = static_cast<Eigen::Index>(stages.size());
        for (Eigen::Index k = 0; k < forward.propagators.size(); ++k) {
            const Mat u_before = forward.stage_states[k];
            const Mat lambda_after = adjoint.stage_states[k + 1];
            const Stage& stage = stages[static_cast<std::size_t>(k % per_step)];
            const Eigen::Index step = k / per_step;
            const double tau = forward.taus[k];
            Mat g;
            StageExponential general;
            if (forward.hermitian) {
                // tr(L^+ V (Phi o V^+ dH V) V^+ U) (-i tau) = sum_ab dH_ab G_ab with
                // G = conj(V) W V^T and W = (V^+ U L^+ V)^T o Phi (-i tau).
                const Mat v = forward.eigenvectors[k];
                const RVec w = forward.eigenvalues.col(k);
                const Mat b = v.adjoint() * u_before * lambda_after.adjoint() * v;
                const Mat weighted = b.transpose().cwiseProduct(divided_differences(w, tau)) * (-kI * tau);
                g = v.conjugate() * weighted * v.transpose();
            } else {
                general = forward.stage(k);
            }
            for (Eigen::Index c = 0; c < m; ++c) {
                Complex overlap;
                if (forward.hermitian) {
                    overlap = dh[c].cwiseProduct(g).sum();
                } else {
                    overlap = (lambda_after.adjoint() * Mat(exp_derivative(general, derivs[c])) * u_before).trace();
                }
                const double sens = 2.0 * overlap.real();
                values(2 * step, c) += stage.mix[0] * sens;
                values(2 * step + 1, c) += stage.mix[1] * sens;
            }
        }
    }
};

template <typename Fn>
decltype(auto) dispatch(Eigen::Index dim, Fn&& fn) {
    switch (dim) {
        case 2: return fn(Kernel<2>{});
        case 3: return fn(Kernel<3>{});
        default: return fn(Kernel<Eigen::Dynamic>{});
    }
}

}  // namespace

StageExponential exponentiate(const CMatrix& h, double tau, bool hermitian) {
    StageExponential s;
    s.tau = tau;
    s.hermitian = hermitian;
    if (hermitian) {
        const auto f = Kernel<Eigen::Dynamic>::hermitian_exp(h, tau);
        s.propagator = f.propagator;
        s.eigenvectors = f.eigenvectors;
        s.eigenvalues = f.eigenvalues;
    } else {
        s.generator = h;
        const Eigen::MatrixXcd x = Eigen::MatrixXcd(h) * (-kI * tau);
        s.propagator = x.exp();
    }
    return s;
}

CMatrix exp_derivative(const StageExponential& stage, const CMatrix& dh) {
    const auto d = dh.rows();
    if (stage.hermitian) {
        const CMatrix& v = stage.eigenvectors;
        CMatrix m = v.adjoint() * dh * v;
        m = m.cwiseProduct(Kernel<Eigen::Dynamic>::divided_differences(stage.eigenvalues, stage.tau)) *
            (-kI * stage.tau);
        return v * m * v.adjoint();
    }
    Eigen::MatrixXcd block = Eigen::MatrixXcd::Zero(2 * d, 2 * d);
    block.topLeftCorner(d, d) = Eigen::MatrixXcd(stage.generator) * (-kI * stage.tau);
    block.bottomRightCorner(d, d) = block.topLeftCorner(d, d);
    block.topRightCorner(d, d) = Eigen::MatrixXcd(dh) * (-kI * stage.tau);
    const Eigen::MatrixXcd e = block.exp();
    return e.topRightCorner(d, d);
}

StageExponential EvolutionTrajectory::stage(Eigen::Index k) const {
    StageExponential s;
    s.tau = taus[k];
    s.hermitian = hermitian;
    s.propagator = propagators[k];
    if (hermitian) {
        s.eigenvectors = eigenvectors[k];
        s.eigenvalues = eigenvalues.col(k);
    } else {
        s.generator = generators[static_cast<std::size_t>(k)];
    }
    return s;
}

EvolutionTrajectory propagate_forward(const HamiltonianModel& model, const SystemParameters& xi,
                                      const ControlWaveform& waveform) {
    check_inputs(model, waveform);
    const int d = model.dimension();
    const auto per_step = static_cast<Eigen::Index>(waveform.grid.stages().size());
    const Eigen::Index n_stages = waveform.grid.n_steps * per_step;
    EvolutionTrajectory traj;
    traj.grid = waveform.grid;
    traj.hermitian = model.hermitian();
    traj.operators = MatrixSequence(d, waveform.grid.n_steps + 1);
    traj.stage_states = MatrixSequence(d, n_stages + 1);
    traj.propagators = MatrixSequence(d, n_stages);
    traj.taus.resize(n_stages);
    if (traj.hermitian) {
        traj.eigenvectors = MatrixSequence(d, n_stages);
        traj.eigenvalues.resize(d, n_stages);
    } else {
        traj.generators.reserve(static_cast<std::size_t>(n_stages));
    }
    dispatch(d, [&](auto kernel) { decltype(kernel)::forward(model, xi, waveform, traj); });
    return traj;
}

AdjointTrajectory propagate_adjoint(const EvolutionTrajectory& forward, const CMatrix& boundary) {
    if (!boundary.allFinite()) throw PropagationError("non-finite adjoint boundary value");
    const Eigen::Index d = forward.operators.dim();
    if (boundary.rows() != d || boundary.cols() != d) throw std::invalid_argument("adjoint boundary has wrong shape");
    AdjointTrajectory adj;
    adj.grid = forward.grid;
    adj.stage_states = MatrixSequence(d, forward.propagators.size() + 1);
    adj.operators = MatrixSequence(d, forward.grid.n_steps + 1);
    dispatch(d, [&](auto kernel) { decltype(kernel)::backward(forward, boundary, adj); });
    return adj;
}

AdjointTrajectory propagate_adjoint(const HamiltonianModel& model, const SystemParameters& xi,
                                    const ControlWaveform& waveform, const CMatrix& boundary) {
    return propagate_adjoint(propagate_forward(model, xi, waveform), boundary);
}

GradientDensity gradient_integrand(const HamiltonianModel& model, const SystemParameters& xi,
                                   const EvolutionTrajectory& forward, const AdjointTrajectory& adjoint) {
    if (!(forward.grid == adjoint.grid) || forward.stage_states.size() != adjoint.stage_states.size()) {
        throw std::invalid_argument("forward and adjoint trajectories are on different grids");
    }
    const auto derivs = model.control_derivatives(xi);
    GradientDensity out;
    out.times = forward.grid.nodes();
    out.weights = forward.grid.node_weights();
    out.values = MatrixXd::Zero(out.times.size(), static_cast<Eigen::Index>(derivs.size()));
    dispatch(forward.operators.dim(),
             [&](auto kernel) { decltype(kernel)::gradient(derivs, forward, adjoint, out.values); });
    out.values.array().colwise() /= out.weights.array();
    return out;
}

CMatrix propagate_steps(const HamiltonianModel& model, const SystemParameters& xi, const ControlWaveform& waveform,
                        const CMatrix& initial, int step_begin, int step_end) {
    check_inputs(model, waveform);
    if (step_begin < 0 || step_end > waveform.grid.n_steps || step_begin > step_end) {
        throw std::invalid_argument("step range outside the waveform grid");
    }
    const auto stages = waveform.grid.stages();
    const double dt = waveform.grid.dt();
    VectorXd eps(waveform.n_channels());
    CMatrix u = initial;
    for (int i = step_begin; i < step_end; ++i) {
        for (const Stage& stage : stages) {
            eps = stage.mix[0] * waveform.node_samples.row(2 * i).transpose() +
                  stage.mix[1] * waveform.node_samples.row(2 * i + 1).transpose();
            const CMatrix h = model.evaluate(xi, eps);
            if (!h.allFinite()) throw PropagationError("non-finite Hamiltonian at step " + std::to_string(i));
            u = exponentiate(h, stage.fraction * dt, model.hermitian()).propagator * u;
        }
    }
    return u;
}

double step_doubling_error(const HamiltonianModel& model, const SystemParameters& xi,
                           const std::function<ControlWaveform(const TimeGrid&)>& make_waveform,
                           const TimeGrid& grid) {
    const int d = model.dimension();
    const CMatrix id = CMatrix::Identity(d, d);
    const ControlWaveform coarse = make_waveform(grid);
    const ControlWaveform fine = make_waveform(grid.refined(2));
    const CMatrix a = propagate_steps(model, xi, coarse, id, 0, coarse.grid.n_steps);
    const CMatrix b = propagate_steps(model, xi, fine, id, 0, fine.grid.n_steps);
    return max_abs(a - b);
}

double unitarity_defect(const EvolutionTrajectory& trajectory) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < trajectory.operators.size(); ++i) {
        const CMatrix u = trajectory.operators[i];
        worst = std::max(worst, max_abs(u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())));
    }
    return worst;
}

}  // namespace pulseforge
