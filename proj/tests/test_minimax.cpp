#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pulseforge/lbfgs.hpp"
#include "pulseforge/minimax.hpp"

using namespace pulseforge;

namespace {

const double kT = 24 * std::numbers::pi;

// Grid objective J_i(x) = a_i (x - c_i)^2 on a single coefficient.
GridObjective parabolas(std::vector<double> scale, std::vector<double> center) {
    return [=](const FourierParametrization& p) {
        const double x = p.coefficients(0, 0);
        GridEvaluation e;
        const auto n = static_cast<Eigen::Index>(scale.size());
        e.values.resize(n);
        e.gradients.resize(n, 1);
        e.trace_fidelities = VectorXd::Ones(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            e.values[i] = scale[i] * (x - center[i]) * (x - center[i]);
            e.gradients(i, 0) = 2.0 * scale[i] * (x - center[i]);
        }
        return e;
    };
}

OptimizerOptions quiet_options() {
    OptimizerOptions o;
    o.max_iterations = 400;
    return o;
}

}  // namespace

TEST_CASE("default REQC grid") {
    const auto g = default_reqc_grid();
    REQUIRE(g.size() == 49);
    CHECK_NOTHROW(g.validate());
    std::set<std::pair<double, double>> seen;
    int far = 0;
    for (const auto& p : g.points) {
        seen.insert({p.gamma, p.delta});
        if (std::abs(p.delta) >= 5.0) {
            ++far;
            CHECK(p.gamma == 1.0);
        } else {
            CHECK(p.gamma >= 0.9 - 1e-15);
            CHECK(p.gamma <= 1.1 + 1e-15);
            CHECK(std::abs(p.delta) <= 1.5);
        }
    }
    CHECK(seen.size() == 49);
    CHECK(far == 14);
    CHECK(seen.count({1.0, 0.0}) == 1);
    CHECK(seen.count({0.9, -1.5}) == 1);
    CHECK(seen.count({1.0, -20.0}) == 1);
    CHECK(seen.count({1.0, 5.0}) == 1);
}

TEST_CASE("grid validation") {
    ParameterGrid empty;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
    ParameterGrid dup{{{1.0, 0.0}, {1.0, 0.0}}, {}};
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
    ParameterGrid bad_weight{{{1.0, 0.0}, {1.0, 1.0}}, {1.0, 0.0}};
    CHECK_THROWS_AS(bad_weight.validate(), std::invalid_argument);
    ParameterGrid wrong_count{{{1.0, 0.0}}, {1.0, 2.0}};
    CHECK_THROWS_AS(wrong_count.validate(), std::invalid_argument);
    ParameterGrid ok{{{1.0, 0.0}, {1.0, 1.0}}, {1.0, 2.0}};
    CHECK(ok.weight_vector()[1] == 2.0);
}

TEST_CASE("target map switches to identity far from resonance") {
    const auto m = reqc_target_map();
    CHECK(max_abs(m({1.0, 4.99}).matrix - phase_gate_target().matrix) == 0.0);
    CHECK(max_abs(m({1.0, -5.0}).matrix - identity_target(2).matrix) == 0.0);
    CHECK(max_abs(reqc_target_map(2.0)({1.0, 3.0}).matrix - identity_target(2).matrix) == 0.0);
    CHECK_THROWS(reqc_target_map(0.0));
}

TEST_CASE("aggregate examples") {
    VectorXd v(3);
    v << 0.1, 0.5, 0.2;
    const MatrixXd g = MatrixXd::Identity(3, 3);
    const auto a = aggregate(v, g, 1e4);
    CHECK(a.value >= 0.5);
    CHECK(a.value <= 0.5 + std::log(3.0) / 1e4);
    CHECK(a.softmax[1] == doctest::Approx(1.0).epsilon(1e-12));

    const VectorXd same = VectorXd::Constant(4, 0.3);
    const auto b = aggregate(same, MatrixXd::Identity(4, 4), 2.0);
    CHECK(b.value == doctest::Approx(0.3 + std::log(4.0) / 2.0).epsilon(1e-15));
    CHECK((b.softmax.array() - 0.25).abs().maxCoeff() <= 1e-15);

    // Huge values must not overflow.
    VectorXd big(2);
    big << 1e3, 1e3 - 1.0;
    const auto c = aggregate(big, MatrixXd::Identity(2, 2), 1e4);
    CHECK(std::isfinite(c.value));
    CHECK(c.value == doctest::Approx(1e3).epsilon(1e-15));

    VectorXd w(3);
    w << 1.0, 2.0, 1.0;
    const auto d = aggregate(VectorXd::Zero(3), MatrixXd::Identity(3, 3), 1.0, w);
    CHECK(d.value == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(d.softmax[1] == doctest::Approx(0.5).epsilon(1e-15));

    CHECK_THROWS(aggregate(VectorXd(), MatrixXd(), 1.0));
    CHECK_THROWS(aggregate(v, g, 0.0));
    CHECK_THROWS(aggregate(v, MatrixXd::Identity(2, 2), 1.0));
}

TEST_CASE("aggregate gradient matches finite differences of the chain") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    // J_i(x) = sin(a_i . x) with known Jacobian.
    MatrixXd a(5, 3);
    for (auto& e : a.reshaped()) e = n01(rng);
    auto jac = [&](const VectorXd& x, VectorXd& values) {
        values = (a * x).array().sin();
        return MatrixXd(a.array().colwise() * (a * x).array().cos());
    };
    VectorXd x(3);
    x << 0.2, -0.4, 0.9;
    for (double p : {1.0, 10.0, 100.0}) {
        VectorXd values;
        const MatrixXd jm = jac(x, values);
        const auto agg = aggregate(values, jm, p);
        const auto fd = oracle::central_difference(
            [&](const Eigen::VectorXd& y) {
                VectorXd vals;
                const MatrixXd j = jac(y, vals);
                return aggregate(vals, j, p).value;
            },
            x, 1e-6);
        CHECK((agg.gradient - fd).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("single point, single sharpness, no constraint reduces to plain L-BFGS") {
    const ReqcModel m;
    const ParameterGrid grid{{{0.95, 0.3}}, {}};
    const auto initial = naive_initial_guess(4, 2, kT, 1.0);
    EvaluationSettings settings;
    settings.grid = TimeGrid(kT, 128);
    OptimizerOptions o;
    o.sharpness_schedule = {1.0};
    o.enforce_amplitude = false;
    o.max_iterations = 15;
    const auto result = optimize(m, grid, reqc_target_map(), initial, o, settings);

    LbfgsOptions lo;
    lo.memory = o.lbfgs_memory;
    lo.max_iterations = 15;
    lo.gradient_tolerance = o.gradient_tolerance;
    lo.step_tolerance = o.step_tolerance;
    const auto plain = minimize_lbfgs(
        [&](const VectorXd& x, VectorXd& g) {
            auto p = initial;
            p.set_flat(x);
            const auto r = objective_and_gradient(m, grid.points[0], phase_gate_target(), p, {}, settings.grid);
            g = r.gradient;
            return r.value;
        },
        initial.flat(), lo);
    CHECK((result.coefficients.flat() - plain.x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(result.J_max == doctest::Approx(plain.value).epsilon(1e-12));
    CHECK(result.J_max < result.history.front().j_max);
}

TEST_CASE("minimax of two parabolas") {
    auto p = FourierParametrization::zeros(1, 0, 1.0);
    p.coefficients(0, 0) = 3.0;
    const auto r = optimize(parabolas({1.0, 4.0}, {1.0, -1.0}), p, quiet_options());
    // Exact minimax: (x - 1)^2 = 4 (x + 1)^2 at x = -1/3, value 16/9.
    CHECK(r.coefficients.coefficients(0, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-4));
    CHECK(r.J_max >= 16.0 / 9.0 - 1e-12);
    CHECK(r.J_max <= 16.0 / 9.0 + 1e-4);
    CHECK(r.converged());
    // Aggregate is within log(N)/p of the maximum.
    const auto& last = r.history.back();
    CHECK(last.aggregate >= last.j_max - 1e-12);
    CHECK(last.aggregate <= last.j_max + std::log(2.0) / 1e4 + 1e-12);
}

TEST_CASE("a shared minimizer is recovered to high accuracy") {
    auto p = FourierParametrization::zeros(1, 0, 1.0);
    p.coefficients(0, 0) = -2.0;
    const auto r = optimize(parabolas({1.0, 3.0, 0.5}, {0.7, 0.7, 0.7}), p, quiet_options());
    CHECK(std::abs(r.coefficients.coefficients(0, 0) - 0.7) <= 1e-8);
    CHECK(r.J_max <= 1e-15);
}

TEST_CASE("amplitude bound holds when the unconstrained optimum violates it") {
    // Two channels (one complex pair), DC only; objective wants eps_0 = 3.
    auto p = FourierParametrization::zeros(2, 0, 1.0, 1.0);
    p.coefficients(0, 0) = 0.2;
    GridObjective fn = [](const FourierParametrization& q) {
        GridEvaluation e;
        const double a = q.coefficients(0, 0), b = q.coefficients(1, 0);
        e.values = VectorXd::Constant(1, (a - 3.0) * (a - 3.0) + b * b);
        e.gradients = MatrixXd(1, 2);
        e.gradients << 2.0 * (a - 3.0), 2.0 * b;
        e.trace_fidelities = VectorXd::Ones(1);
        return e;
    };
    OptimizerOptions o = quiet_options();
    o.n_steps = 16;
    const auto r = optimize(fn, p, o);
    CHECK(r.max_violation <= 1e-6);
    CHECK(relative_amplitude_violation(r.coefficients, 16) <= 1e-6);
    CHECK(r.coefficients.coefficients(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("real controls give detuning-symmetric objectives") {
    const ReqcModel m;
    auto p = naive_initial_guess(4, 3, kT, 1.0, 42, 0.05);
    p.coefficients.row(1).setZero();
    p.coefficients.row(3).setZero();
    ParameterGrid grid;
    for (double d : {0.5, 1.0, 1.5}) {
        grid.points.push_back({0.95, d});
        grid.points.push_back({0.95, -d});
    }
    EvaluationSettings s;
    s.grid = TimeGrid(kT, 256);
    const auto e = evaluate_grid(m, grid, reqc_target_map(), p, s);
    for (Eigen::Index i = 0; i < 6; i += 2) CHECK(std::abs(e.values[i] - e.values[i + 1]) <= 1e-9);
}

TEST_CASE("evaluating the default grid") {
    const ReqcModel m;
    const auto p = naive_initial_guess(4, 24, kT, 1.0);
    EvaluationSettings s;
    s.grid = TimeGrid(kT, 256);
    s.threads = 1;
    const auto serial = evaluate_grid(m, default_reqc_grid(), reqc_target_map(), p, s);
    REQUIRE(serial.values.size() == 49);
    CHECK(serial.values.allFinite());
    CHECK(serial.gradients.allFinite());
    CHECK(serial.gradients.cols() == p.n_coefficients());
    CHECK(serial.values.minCoeff() >= -1e-12);
    CHECK(serial.values.maxCoeff() <= 1.0 + 1e-12);

    s.threads = 4;
    const auto threaded = evaluate_grid(m, default_reqc_grid(), reqc_target_map(), p, s);
    CHECK((serial.values - threaded.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((serial.gradients - threaded.gradients).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grid gradient rows match per-point finite differences") {
    const ReqcModel m;
    const auto p = naive_initial_guess(4, 1, 6.0, 1.0, 3, 0.3);
    const ParameterGrid grid{{{1.0, 0.0}, {0.9, 0.5}, {1.0, 6.0}}, {}};
    EvaluationSettings s;
    s.grid = TimeGrid(6.0, 40);
    const auto e = evaluate_grid(m, grid, reqc_target_map(), p, s);
    for (Eigen::Index i = 0; i < 3; ++i) {
        const auto fd = oracle::central_difference(
            [&](const Eigen::VectorXd& x) {
                auto q = p;
                q.set_flat(x);
                return evaluate_grid(m, grid, reqc_target_map(), q, s).values[i];
            },
            p.flat(), 1e-6);
        CHECK((e.gradients.row(i).transpose() - fd).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1e-3, fd.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("a failing grid point is named") {
    const ReqcModel m;
    const ParameterGrid grid{{{1.0, 0.0}, {1.05, 0.5}}, {}};
    TargetMap broken = [](const SystemParameters& xi) {
        return xi.delta == 0.5 ? identity_target(3) : phase_gate_target();
    };
    EvaluationSettings s;
    s.grid = TimeGrid(1.0, 4);
    try {
        evaluate_grid(m, grid, broken, naive_initial_guess(4, 0, 1.0, 1.0), s);
        FAIL("expected an exception");
    } catch (const PropagationError& e) {
        const std::string what = e.what();
        CHECK(what.find("gamma=1.05") != std::string::npos);
        CHECK(what.find("delta=0.5") != std::string::npos);
    }
}

TEST_CASE("iteration budget is reported") {
    const ReqcModel m;
    const ParameterGrid grid{{{0.9, 0.0}, {1.1, 0.0}}, {}};
    EvaluationSettings s;
    s.grid = TimeGrid(kT, 128);
    OptimizerOptions o;
    o.max_iterations = 4;
    const auto r = optimize(m, grid, reqc_target_map(), naive_initial_guess(4, 2, kT, 1.0), o, s);
    CHECK(r.termination == Termination::max_iterations);
    CHECK_FALSE(r.converged());
    CHECK(r.history.back().iteration <= 4);
    CHECK(r.J_max < r.history.front().j_max);
    CHECK(to_string(r.termination) == "max_iterations");
    CHECK_THROWS_AS(optimize(TwoLevelModel(), grid, reqc_target_map(), naive_initial_guess(4, 2, kT, 1.0), o, s),
                    std::invalid_argument);
}

TEST_CASE("merit decreases within an unconstrained solve") {
    const ReqcModel m;
    const ParameterGrid grid{{{0.9, 0.0}, {1.1, 0.0}, {1.0, 1.0}}, {}};
    EvaluationSettings s;
    s.grid = TimeGrid(kT, 128);
    OptimizerOptions o;
    o.sharpness_schedule = {50.0};
    o.enforce_amplitude = false;
    o.max_iterations = 20;
    const auto r = optimize(m, grid, reqc_target_map(), naive_initial_guess(4, 3, kT, 1.0), o, s);
    REQUIRE(r.history.size() >= 2);
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        CHECK(r.history[i].merit <= r.history[i - 1].merit);
        CHECK(r.history[i].iteration == r.history[i - 1].iteration + 1);
    }
}

TEST_CASE("naive initial guess") {
    const auto a = naive_initial_guess(4, 24, kT, 1.0);
    const auto b = naive_initial_guess(4, 24, kT, 1.0);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.coefficients(0, 0) == doctest::Approx(2 * std::numbers::pi / kT).epsilon(1e-15));
    MatrixXd rest = a.coefficients;
    rest(0, 0) = 0.0;
    CHECK(rest.cwiseAbs().maxCoeff() <= 1e-3);
    CHECK(rest.cwiseAbs().maxCoeff() > 0.0);
    CHECK(naive_initial_guess(4, 24, kT, 1.0, 7).coefficients != a.coefficients);
    CHECK(relative_amplitude_violation(a, 1024) == 0.0);
}

TEST_CASE("history CSV") {
    std::vector<HistoryEntry> h{{0, 0.5, 0.6, 1.0, 0.0, 10.0, 0.6}, {1, 0.25, 0.3, 0.5, 1e-7, 10.0, 0.3}};
    std::ostringstream out;
    write_history_csv(out, h);
    CHECK(out.str() == "iter,J_max,aggregate,grad_norm,max_violation\n0,0.5,0.6,1,0\n1,0.25,0.3,0.5,1e-07\n");
}
