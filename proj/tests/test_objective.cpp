#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pulseforge/objective.hpp"

using namespace pulseforge;

namespace {

const double kPi = std::numbers::pi;
const std::vector<int> kQubits{0, 1};

CMatrix diag2(Complex a, Complex b) {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

CMatrix to_cmatrix(const oracle::Mat& m) { return CMatrix(m); }

FourierParametrization random_pulse(std::mt19937_64& rng, int k, double t, double scale) {
    std::normal_distribution<double> g;
    auto p = FourierParametrization::zeros(4, k, t);
    for (Eigen::Index i = 0; i < p.coefficients.size(); ++i) p.coefficients.data()[i] = scale * g(rng);
    return p;
}

// Distance from 0 to the convex hull of unit-modulus eigenvalues.
double hull_distance(const std::vector<Complex>& eig) {
    std::vector<double> angles;
    for (auto e : eig) angles.push_back(std::arg(e));
    std::sort(angles.begin(), angles.end());
    double widest_gap = angles.front() + 2 * kPi - angles.back();
    for (std::size_t i = 1; i < angles.size(); ++i) widest_gap = std::max(widest_gap, angles[i] - angles[i - 1]);
    if (widest_gap <= kPi) return 0.0;
    double best = 1.0;
    for (std::size_t i = 0; i < eig.size(); ++i)
        for (std::size_t j = i + 1; j < eig.size(); ++j) best = std::min(best, oracle::segment_distance(eig[i], eig[j]));
    return best;
}

}  // namespace

TEST_CASE("trace fidelity examples") {
    CHECK(trace_fidelity(CMatrix(CMatrix::Identity(2, 2))) == 1.0);
    CHECK(trace_fidelity(diag2(1.0, -1.0)) == 0.0);
    CHECK(trace_fidelity(diag2(1.0, Complex(0.0, 1.0))) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));

    CMatrix u = CMatrix::Identity(3, 3);
    u(0, 0) = -1.0;
    CHECK(trace_fidelity(phase_gate_target(), u, kQubits) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(trace_fidelity(identity_target(2), u, kQubits) == doctest::Approx(0.0));
}

TEST_CASE("qubit restriction picks the indexed block") {
    CMatrix u(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) u(r, c) = Complex(r, c);
    const auto o = qubit_restriction(identity_target(2), u, {2, 0});
    CHECK(o.matrix(0, 0) == Complex(2, 2));
    CHECK(o.matrix(0, 1) == Complex(2, 0));
    CHECK(o.matrix(1, 0) == Complex(0, 2));
    CHECK_THROWS_AS(qubit_restriction(identity_target(2), u, {0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(qubit_restriction(identity_target(3), u, {0, 1}), std::invalid_argument);
}

TEST_CASE("worst-case fidelity of diagonal unitaries") {
    CHECK(worst_case_fidelity(CMatrix(CMatrix::Identity(2, 2))) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(worst_case_fidelity(diag2(1.0, -1.0)) <= 1e-12);
    CHECK(worst_case_fidelity(diag2(1.0, std::polar(1.0, 2 * kPi / 3))) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(worst_case_fidelity(diag2(1.0, Complex(0.0, 1.0))) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-10));
    CMatrix one(1, 1);
    one(0, 0) = Complex(0.6, 0.0);
    CHECK(worst_case_fidelity(one) == doctest::Approx(0.6));
}

TEST_CASE("worst-case fidelity matches a brute-force sphere search for 2x2 restrictions") {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const oracle::Mat u = oracle::haar_unitary(rng, 3);
        const oracle::Mat o = u.topLeftCorner(2, 2);
        const double expected = oracle::grid_worst_case(o, 600);
        const double got = worst_case_fidelity(to_cmatrix(o));
        worst = std::max(worst, std::abs(got - expected));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("worst-case fidelity is the distance to the elliptical numerical range") {
    std::mt19937_64 rng(102);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 200; ++trial) {
        oracle::Mat o(2, 2);
        if (trial % 2) {
            o = oracle::haar_unitary(rng, 3).topLeftCorner(2, 2);
        } else {
            for (int k = 0; k < 4; ++k) o(k / 2, k % 2) = Complex(g(rng), g(rng)) * 0.5;
        }
        CHECK(worst_case_fidelity(to_cmatrix(o)) == doctest::Approx(oracle::ellipse_worst_case(o)).epsilon(1e-9));
    }
}

TEST_CASE("worst-case fidelity of unitary restrictions is the eigenvalue hull distance") {
    std::mt19937_64 rng(55);
    for (int n : {2, 3, 4}) {
        for (int trial = 0; trial < 30; ++trial) {
            // Eigenvalues clustered in an arc so the hull often misses the origin.
            const oracle::Mat v = oracle::haar_unitary(rng, n);
            std::uniform_real_distribution<double> arc(0.0, trial % 2 ? 2.5 : 6.2);
            std::vector<Complex> eig;
            Eigen::VectorXcd d(n);
            for (int k = 0; k < n; ++k) eig.push_back(d[k] = std::polar(1.0, arc(rng)));
            const oracle::Mat o = v * d.asDiagonal() * v.adjoint();
            CHECK(worst_case_fidelity(to_cmatrix(o)) == doctest::Approx(hull_distance(eig)).epsilon(1e-9));
        }
    }
}

TEST_CASE("worst-case fidelity never exceeds sampled states") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 3;
        const oracle::Mat o = oracle::haar_unitary(rng, n + 1).topLeftCorner(n, n);
        const double f = worst_case_fidelity(to_cmatrix(o));
        for (int s = 0; s < 200; ++s) {
            Eigen::VectorXcd psi(n);
            for (auto& z : psi) z = Complex(g(rng), g(rng));
            psi.normalize();
            CHECK(f <= std::abs(psi.dot(o * psi)) + 1e-12);
        }
    }
}

TEST_CASE("rank-one defect attains the bound with equality") {
    std::mt19937_64 rng(9);
    for (int n : {2, 3, 4}) {
        for (double c : {0.0, 0.1, 0.5, 0.9, 1.0}) {
            Eigen::VectorXcd v = oracle::haar_unitary(rng, n).col(0);
            const oracle::Mat o = oracle::Mat::Identity(n, n) - c * v * v.adjoint();
            const auto r = fidelity_report(to_cmatrix(o));
            CHECK(r.trace_fidelity == doctest::Approx(1.0 - c / n).epsilon(1e-14));
            CHECK(r.worst_case_fidelity == doctest::Approx(1.0 - c).epsilon(1e-12));
            CHECK(std::abs(r.bound_gap) <= 1e-9);
            CHECK(check_bound(r, n));
        }
    }
}

TEST_CASE("infidelity bound on random contractions") {
    std::mt19937_64 rng(2024);
    double largest_excess = -1.0;
    for (int s = 0; s < 10000; ++s) {
        const int n = 2 + s % 3;
        const oracle::Mat o = oracle::haar_unitary(rng, n + 1).topLeftCorner(n, n);
        const auto r = fidelity_report(to_cmatrix(o));
        largest_excess = std::max(largest_excess, (1.0 - r.worst_case_fidelity) - n * (1.0 - r.trace_fidelity));
    }
    CHECK(largest_excess <= 1e-9);
}

TEST_CASE("fidelities ignore a global phase") {
    std::mt19937_64 rng(4);
    const oracle::Mat o = oracle::haar_unitary(rng, 3).topLeftCorner(2, 2);
    const auto a = fidelity_report(to_cmatrix(o));
    const auto b = fidelity_report(to_cmatrix(o * std::polar(1.0, 1.234)));
    CHECK(a.trace_fidelity == doctest::Approx(b.trace_fidelity).epsilon(1e-14));
    CHECK(a.worst_case_fidelity == doctest::Approx(b.worst_case_fidelity).epsilon(1e-10));
}

TEST_CASE("terminal cost and its boundary value") {
    std::mt19937_64 rng(31);
    const oracle::Mat u = oracle::haar_unitary(rng, 3);
    const CMatrix uc = to_cmatrix(u);
    const auto target = phase_gate_target();
    const double t = trace_fidelity(target, uc, kQubits);
    CHECK(terminal_cost(target, uc, kQubits) == doctest::Approx(1.0 - t * t).epsilon(1e-14));

    // Directional derivative of phi along U -> U + s dU equals 2 Re tr(B^dagger dU).
    const CMatrix b = adjoint_boundary(target, uc, kQubits);
    const oracle::Mat du = oracle::haar_unitary(rng, 3);
    const double h = 1e-6;
    const double fd = (terminal_cost(target, to_cmatrix(u + h * du), kQubits) -
                       terminal_cost(target, to_cmatrix(u - h * du), kQubits)) /
                      (2 * h);
    const double analytic = 2.0 * (b.adjoint() * to_cmatrix(du)).trace().real();
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-7));
    CHECK(max_abs(b.row(2)) == 0.0);
    CHECK(max_abs(b.col(2)) == 0.0);
}

TEST_CASE("objective gradient matches central differences") {
    std::mt19937_64 rng(17);
    const ReqcModel hermitian;
    const ReqcModel lossy(0.2);
    const auto target = phase_gate_target();
    struct Case {
        const HamiltonianModel* model;
        Integrator scheme;
        BoundaryKind boundary;
        PenaltySpec penalty;
    };
    const std::vector<Case> cases{
        {&hermitian, Integrator::magnus4, BoundaryKind::standard, {}},
        {&hermitian, Integrator::midpoint, BoundaryKind::standard, {}},
        {&hermitian, Integrator::magnus4, BoundaryKind::optimized, {}},
        {&hermitian, Integrator::magnus4, BoundaryKind::standard, {PenaltyForm::quadratic, 0.05}},
        {&lossy, Integrator::magnus4, BoundaryKind::standard, {}},
    };
    for (const auto& c : cases) {
        const auto p = random_pulse(rng, 2, 5.0, 0.5);
        const SystemParameters xi{0.93, 0.4};
        const TimeGrid grid(5.0, 40, c.scheme);
        const auto res = objective_and_gradient(*c.model, xi, target, p, c.penalty, grid, c.boundary);
        const auto fd = oracle::central_difference(
            [&](const Eigen::VectorXd& x) {
                auto q = p;
                q.set_flat(x);
                return objective_and_gradient(*c.model, xi, target, q, c.penalty, grid, c.boundary).value;
            },
            p.flat(), 1e-6);
        CHECK((res.gradient - fd).cwiseAbs().maxCoeff() <= 1e-6 * fd.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("both adjoint boundaries give the same gradient") {
    std::mt19937_64 rng(23);
    const ReqcModel m;
    for (int trial = 0; trial < 5; ++trial) {
        const auto p = random_pulse(rng, 3, 6.0, 0.6);
        const SystemParameters xi{1.0 + 0.05 * trial, -0.3 * trial};
        const auto a = objective_and_gradient(m, xi, phase_gate_target(), p, {}, 60, BoundaryKind::standard);
        const auto b = objective_and_gradient(m, xi, phase_gate_target(), p, {}, 60, BoundaryKind::optimized);
        CHECK(a.value == b.value);
        CHECK((a.gradient - b.gradient).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, a.gradient.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("optimized boundary shrinks columns and needs a Hermitian model") {
    std::mt19937_64 rng(29);
    const auto p = random_pulse(rng, 2, 4.0, 0.6);
    const auto w = synthesize(p, 20);
    const auto fwd = propagate_forward(ReqcModel(), {1.0, 0.0}, w);
    const CMatrix std_b = adjoint_boundary(phase_gate_target(), fwd.final_operator(), kQubits);
    const CMatrix opt_b = optimized_adjoint_boundary(phase_gate_target(), fwd, kQubits);
    for (int k = 0; k < 3; ++k) CHECK(opt_b.col(k).norm() <= std_b.col(k).norm() + 1e-15);
    CHECK_THROWS_AS(waveform_objective(ReqcModel(0.1), {}, phase_gate_target(), w, {}, BoundaryKind::optimized),
                    std::invalid_argument);
}

TEST_CASE("quadratic penalty adds weight times the control energy") {
    const ReqcModel m;
    auto p = FourierParametrization::zeros(4, 1, 3.0);
    p.coefficients(0, 0) = 0.2;
    p.coefficients(3, 0) = -0.1;
    const auto none = objective_and_gradient(m, {}, phase_gate_target(), p, {}, 30);
    const auto zero = objective_and_gradient(m, {}, phase_gate_target(), p, {PenaltyForm::quadratic, 0.0}, 30);
    const auto with = objective_and_gradient(m, {}, phase_gate_target(), p, {PenaltyForm::quadratic, 0.5}, 30);
    CHECK(zero.value == none.value);
    CHECK(max_abs(zero.gradient - none.gradient) == 0.0);
    CHECK(with.value - none.value == doctest::Approx(0.5 * 3.0 * (0.04 + 0.01)).epsilon(1e-12));
    CHECK_THROWS_AS((PenaltySpec{PenaltyForm::quadratic, -1.0}.validate()), std::invalid_argument);
}

TEST_CASE("ideal pulse has zero cost") {
    const ReqcModel m;
    const double t = 24 * kPi;
    auto p = FourierParametrization::zeros(4, 0, t);
    p.coefficients(0, 0) = 2 * kPi / t;
    const auto r = objective_and_gradient(m, {1.0, 0.0}, phase_gate_target(), p, {}, 16);
    CHECK(std::abs(r.value) <= 1e-12);
    CHECK(r.trace_fidelity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.gradient.cwiseAbs().maxCoeff() <= 1e-10);
}
