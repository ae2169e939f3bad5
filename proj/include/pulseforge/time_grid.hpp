#pragma once

#include <array>
#include <span>
#include <string>

#include "pulseforge/types.hpp"

namespace pulseforge {

/// Time-stepping scheme for the piecewise exponential propagator.
///
/// Both schemes sample the controls at two nodes per step and build every
/// step from exact matrix exponentials, so the backward sweep is the exact
/// discrete adjoint of the forward sweep.
///   midpoint  one exponential per step, control averaged over the step
///             end points (second-order Magnus).
///   magnus4   two exponentials per step with controls at the Gauss-Legendre
///             nodes (fourth-order commutator-free Magnus).
enum class Integrator { midpoint, magnus4 };

Integrator parse_integrator(const std::string& name);
std::string to_string(Integrator scheme);

/// One exponential factor inside a step: exp(-i * fraction * dt * H(eps_stage))
/// where eps_stage = mix[0] * eps(node 0) + mix[1] * eps(node 1).
struct Stage {
    double fraction;
    std::array<double, 2> mix;
};

/// Uniform grid on [0, duration] with n_steps steps.
struct TimeGrid {
    double duration = 1.0;
    int n_steps = 1;
    Integrator scheme = Integrator::magnus4;

    TimeGrid() = default;
    TimeGrid(double duration, int n_steps, Integrator scheme = Integrator::magnus4);

    double dt() const { return duration / n_steps; }
    static constexpr int nodes_per_step = 2;

    /// n_steps + 1 grid points; the first is exactly 0 and the last exactly T.
    VectorXd points() const;
    /// Control sampling nodes, nodes_per_step per step, step-major.
    VectorXd nodes() const;
    /// Quadrature weight of every node; they sum to the duration.
    VectorXd node_weights() const;
    /// Stages in the order they act on the state.
    std::span<const Stage> stages() const;

    /// Same duration and scheme with n_steps scaled by factor.
    TimeGrid refined(int factor) const;

    bool operator==(const TimeGrid&) const = default;
};

}  // namespace pulseforge
