#pragma once

#include <functional>
#include <optional>
#include <string>

#include "pulseforge/types.hpp"

namespace pulseforge {

/// f(x), writing grad f(x) into the second argument.
using ValueGradientFn = std::function<double(const VectorXd&, VectorXd&)>;

struct Bounds {
    VectorXd lower;
    VectorXd upper;
};

struct LbfgsOptions {
    int memory = 10;
    int max_iterations = 1000;
    double gradient_tolerance = 1e-8;  ///< on the projected gradient, infinity norm
    double step_tolerance = 1e-12;     ///< on the accepted step (or the failed line-search bracket), infinity norm
    int max_line_search = 40;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
};

enum class LbfgsStatus { gradient_converged, step_converged, max_iterations, line_search_failed, stopped };

std::string to_string(LbfgsStatus status);

struct LbfgsResult {
    VectorXd x;
    double value = 0.0;
    VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    LbfgsStatus status = LbfgsStatus::max_iterations;
};

/// Called after each accepted step with (iteration, x, f, grad); returning
/// false stops the run.
using IterationCallback = std::function<bool(int, const VectorXd&, double, const VectorXd&)>;

/// Limited-memory BFGS with optional box bounds.
///
/// Variables sitting on a bound with the gradient pointing outward are frozen
/// for the iteration; the quasi-Newton direction is built on the free ones
/// and the strong-Wolfe line search is capped at the first bound it meets.
LbfgsResult minimize_lbfgs(const ValueGradientFn& fn, VectorXd x0, const LbfgsOptions& options = {},
                           const std::optional<Bounds>& bounds = std::nullopt,
                           const IterationCallback& callback = {});

/// ||P(x - g) - x||_inf, the first-order optimality measure under bounds.
double projected_gradient_norm(const VectorXd& x, const VectorXd& g, const std::optional<Bounds>& bounds);

}  // namespace pulseforge
