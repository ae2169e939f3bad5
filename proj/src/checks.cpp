#include "pulseforge/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pulseforge/control.hpp"
#include "pulseforge/objective.hpp"
#include "pulseforge/propagator.hpp"
#include "pulseforge/system_model.hpp"

namespace pulseforge {
namespace {

struct RandomProblem {
    SystemParameters xi;
    FourierParametrization params;
    Integrator scheme = Integrator::magnus4;
};

RandomProblem random_problem(std::mt19937_64& rng, int case_index) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;
    RandomProblem p;
    p.xi = {0.8 + 0.4 * unit(rng), -2.0 + 4.0 * unit(rng)};
    const int k = 1 + static_cast<int>(rng() % 8);
    p.params = FourierParametrization::zeros(4, k, 4.0 + 6.0 * unit(rng));
    for (Eigen::Index i = 0; i < p.params.coefficients.size(); ++i) p.params.coefficients.data()[i] = 0.4 * normal(rng);
    p.scheme = case_index % 2 == 0 ? Integrator::magnus4 : Integrator::midpoint;
    return p;
}

std::map<std::string, std::vector<double>> describe(const RandomProblem& p, std::uint64_t seed, int index) {
    const VectorXd flat = p.params.flat();
    return {{"seed", {static_cast<double>(seed)}},
            {"case", {static_cast<double>(index)}},
            {"gamma_delta", {p.xi.gamma, p.xi.delta}},
            {"duration", {p.params.duration}},
            {"n_harmonics", {static_cast<double>(p.params.n_harmonics)}},
            {"midpoint_scheme", {p.scheme == Integrator::midpoint ? 1.0 : 0.0}},
            {"coefficients", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

CMatrix haar_unitary(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> normal;
    CMatrix z(n, n);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = Complex(normal(rng), normal(rng));
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ();
    const CMatrix r = qr.matrixQR();
    for (int j = 0; j < n; ++j) q.col(j) *= std::polar(1.0, std::arg(r(j, j)));
    return q;
}

void record(SuiteResult& s, double error, const std::map<std::string, std::vector<double>>& inputs) {
    if (!std::isfinite(error) || error > s.max_error) {
        s.max_error = std::isfinite(error) ? error : std::numeric_limits<double>::infinity();
        if (!(error <= s.tolerance)) {
            s.passed = false;
            s.failing_case = inputs;
        }
    }
}

}  // namespace

SuiteResult check_gradient(const CheckOptions& options) {
    SuiteResult s{"gradient_vs_finite_differences", 0.0, 1e-6, true, {}};
    std::mt19937_64 rng(options.seed);
    const ReqcModel model;
    const TargetGate target = phase_gate_target();
    const PenaltySpec penalty;
    constexpr double h = 1e-5;
    for (int c = 0; c < options.gradient_cases; ++c) {
        RandomProblem p = random_problem(rng, c);
        const TimeGrid grid(p.params.duration, 64, p.scheme);
        VectorXd g = objective_and_gradient(model, p.xi, target, p.params, penalty, grid).gradient;
        if (options.flip_gradient_sign) g = -g;
        const VectorXd x = p.params.flat();
        VectorXd fd(x.size());
        FourierParametrization q = p.params;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            q.set_flat(xp);
            const double fp = objective_and_gradient(model, p.xi, target, q, penalty, grid).value;
            q.set_flat(xm);
            const double fm = objective_and_gradient(model, p.xi, target, q, penalty, grid).value;
            fd[i] = (fp - fm) / (2.0 * h);
        }
        // Components far below the gradient scale are compared against that scale.
        const double floor = std::max(1e-3 * fd.cwiseAbs().maxCoeff(), 1e-12);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), floor));
        }
        record(s, worst, describe(p, options.seed, c));
    }
    return s;
}

SuiteResult check_unitarity(const CheckOptions& options) {
    SuiteResult s{"unitarity", 0.0, 1e-10, true, {}};
    std::mt19937_64 rng(options.seed + 1);
    const ReqcModel hermitian;
    const ReqcModel lossy(0.3);
    for (int c = 0; c < options.unitarity_cases; ++c) {
        RandomProblem p = random_problem(rng, c);
        const ControlWaveform w = synthesize(p.params, TimeGrid(p.params.duration, 256, p.scheme));
        const double defect = unitarity_defect(propagate_forward(hermitian, p.xi, w));
        const EvolutionTrajectory loss = propagate_forward(lossy, p.xi, w);
        double excess = 0.0;
        for (Eigen::Index i = 0; i < loss.operators.size(); ++i) {
            const CMatrix u = loss.operators[i];
            const double top = Eigen::JacobiSVD<CMatrix>(u).singularValues()[0];
            excess = std::max(excess, top - 1.0);
        }
        record(s, std::max(defect, excess), describe(p, options.seed + 1, c));
    }
    return s;
}

SuiteResult check_fidelity_bound(const CheckOptions& options) {
    SuiteResult s{"fidelity_bound", 0.0, 1e-9, true, {}};
    std::mt19937_64 rng(options.seed + 2);
    for (int n = 2; n <= 4; ++n) {
        for (int k = 0; k < options.bound_samples; ++k) {
            const CMatrix u = haar_unitary(rng, n + 1);
            const CMatrix o = u.topLeftCorner(n, n);
            const FidelityReport r = fidelity_report(o);
            std::vector<double> flat;
            for (Eigen::Index i = 0; i < o.size(); ++i) {
                flat.push_back(o.data()[i].real());
                flat.push_back(o.data()[i].imag());
            }
            record(s, -r.bound_gap, {{"n", {static_cast<double>(n)}}, {"restriction_re_im", flat}});
        }
        std::normal_distribution<double> normal;
        for (double f0 : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            CVector psi(n);
            for (int i = 0; i < n; ++i) psi[i] = Complex(normal(rng), normal(rng));
            psi.normalize();
            const CMatrix o = CMatrix::Identity(n, n) - (1.0 - f0) * psi * psi.adjoint();
            const FidelityReport r = fidelity_report(o);
            record(s, std::abs(r.bound_gap), {{"n", {static_cast<double>(n)}}, {"equality_family_F0", {f0}}});
        }
    }
    return s;
}

SuiteResult check_boundary_equivalence(const CheckOptions& options) {
    SuiteResult s{"adjoint_boundary_equivalence", 0.0, 1e-9, true, {}};
    std::mt19937_64 rng(options.seed + 3);
    const ReqcModel model;
    const TargetGate target = phase_gate_target();
    for (int c = 0; c < options.boundary_cases; ++c) {
        RandomProblem p = random_problem(rng, c);
        const TimeGrid grid(p.params.duration, 64, p.scheme);
        const VectorXd g1 = objective_and_gradient(model, p.xi, target, p.params, {}, grid).gradient;
        const VectorXd g2 =
            objective_and_gradient(model, p.xi, target, p.params, {}, grid, BoundaryKind::optimized).gradient;
        double err = (g1 - g2).cwiseAbs().maxCoeff() / std::max(g1.cwiseAbs().maxCoeff(), 1e-300);

        const EvolutionTrajectory fwd = propagate_forward(model, p.xi, synthesize(p.params, grid));
        const CMatrix standard = adjoint_boundary(target, fwd.final_operator(), model.qubit_indices());
        const CMatrix optimized = optimized_adjoint_boundary(target, fwd, model.qubit_indices());
        for (Eigen::Index k = 0; k < standard.cols(); ++k) {
            const double growth = optimized.col(k).norm() - standard.col(k).norm();
            if (growth > 1e-15) err = std::max(err, growth);
        }
        record(s, err, describe(p, options.seed + 3, c));
    }
    return s;
}

std::vector<SuiteResult> run_checks(const CheckOptions& options) {
    return {check_gradient(options), check_unitarity(options), check_fidelity_bound(options),
            check_boundary_equivalence(options)};
}

}  // namespace pulseforge
