#include "pulseforge/time_grid.hpp"

#include <cmath>

namespace pulseforge {
namespace {

const double kSqrt3 = std::sqrt(3.0);
// Gauss-Legendre node offsets on [0, 1].
const double kGaussLow = 0.5 - kSqrt3 / 6.0;
const double kGaussHigh = 0.5 + kSqrt3 / 6.0;
// Commutator-free weights: exp(-i dt (a1 H1 + a2 H2)) exp(-i dt (a2 H1 + a1 H2)).
const double kA1 = (3.0 - 2.0 * kSqrt3) / 12.0;
const double kA2 = (3.0 + 2.0 * kSqrt3) / 12.0;

const std::array<Stage, 1> kMidpointStages{{{1.0, {0.5, 0.5}}}};
// a1 + a2 = 1/2, so each exponential spans dt/2 with the affine control mix
// rescaled by 2.
const std::array<Stage, 2> kMagnus4Stages{{
    {0.5, {2.0 * kA2, 2.0 * kA1}},
    {0.5, {2.0 * kA1, 2.0 * kA2}},
}};

}  // namespace

Integrator parse_integrator(const std::string& name) {
    if (name == "midpoint") return Integrator::midpoint;
    if (name == "magnus4") return Integrator::magnus4;
    throw std::invalid_argument("unknown integrator '" + name + "' (expected midpoint or magnus4)");
}

std::string to_string(Integrator scheme) {
    return scheme == Integrator::midpoint ? "midpoint" : "magnus4";
}

TimeGrid::TimeGrid(double duration_, int n_steps_, Integrator scheme_)
    : duration(duration_), n_steps(n_steps_), scheme(scheme_) {
    if (!(duration > 0.0) || !std::isfinite(duration)) {
        throw std::invalid_argument("time grid duration must be positive and finite");
    }
    if (n_steps < 1) throw std::invalid_argument("time grid needs at least one step");
}

VectorXd TimeGrid::points() const {
    VectorXd t(n_steps + 1);
    for (int i = 0; i <= n_steps; ++i) t[i] = duration * static_cast<double>(i) / n_steps;
    t[n_steps] = duration;
    return t;
}

VectorXd TimeGrid::nodes() const {
    VectorXd t(n_steps * nodes_per_step);
    const double h = dt();
    for (int i = 0; i < n_steps; ++i) {
        const double t0 = duration * static_cast<double>(i) / n_steps;
        if (scheme == Integrator::midpoint) {
            t[2 * i] = t0;
            t[2 * i + 1] = (i + 1 == n_steps) ? duration : duration * static_cast<double>(i + 1) / n_steps;
        } else {
            t[2 * i] = t0 + kGaussLow * h;
            t[2 * i + 1] = t0 + kGaussHigh * h;
        }
    }
    return t;
}

VectorXd TimeGrid::node_weights() const {
    return VectorXd::Constant(n_steps * nodes_per_step, 0.5 * dt());
}

std::span<const Stage> TimeGrid::stages() const {
    if (scheme == Integrator::midpoint) return kMidpointStages;
    return kMagnus4Stages;
}

TimeGrid TimeGrid::refined(int factor) const {
    return TimeGrid(duration, n_steps * factor, scheme);
}

}  // namespace pulseforge
