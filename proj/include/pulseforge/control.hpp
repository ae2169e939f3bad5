#pragma once

#include <iosfwd>
#include <string>

#include "pulseforge/time_grid.hpp"
#include "pulseforge/types.hpp"

namespace pulseforge {

/// Truncated Fourier description of real control channels on [0, T].
///
/// Row c of `coefficients` holds [dc, a_1..a_K, b_1..b_K] for channel c, so
///   eps_c(t) = dc + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T).
/// Complex Rabi frequencies are stored as consecutive (real, imaginary)
/// channel pairs; `amplitude_bound` limits the modulus of each pair.
struct FourierParametrization {
    int n_controls = 0;
    int n_harmonics = 0;
    double duration = 1.0;
    MatrixXd coefficients;
    double amplitude_bound = 1.0;

    static FourierParametrization zeros(int n_controls, int n_harmonics, double duration,
                                        double amplitude_bound = 1.0);

    int coefficients_per_channel() const { return 2 * n_harmonics + 1; }
    int n_coefficients() const { return n_controls * coefficients_per_channel(); }

    /// Channel-major flattening used by the optimizer.
    VectorXd flat() const;
    void set_flat(const VectorXd& values);

    /// Throws std::invalid_argument on a malformed parametrization.
    void validate() const;
};

/// Real controls sampled on a time grid and at the integrator nodes.
struct ControlWaveform {
    TimeGrid grid;
    MatrixXd samples;       ///< (n_steps + 1) x channels, at grid.points()
    MatrixXd node_samples;  ///< (2 n_steps) x channels, at grid.nodes()

    int n_channels() const { return static_cast<int>(samples.cols()); }
    VectorXd time_grid() const { return grid.points(); }
};

/// Samples any callable t -> VectorXd (one entry per channel) onto a grid.
template <typename Fn>
ControlWaveform sample_waveform(const TimeGrid& grid, int n_channels, Fn&& fn) {
    ControlWaveform w;
    w.grid = grid;
    const VectorXd points = grid.points();
    const VectorXd nodes = grid.nodes();
    w.samples.resize(points.size(), n_channels);
    w.node_samples.resize(nodes.size(), n_channels);
    for (Eigen::Index i = 0; i < points.size(); ++i) w.samples.row(i) = fn(points[i]).transpose();
    for (Eigen::Index i = 0; i < nodes.size(); ++i) w.node_samples.row(i) = fn(nodes[i]).transpose();
    return w;
}

/// Basis-function values: row per time, column per coefficient of one channel.
MatrixXd fourier_basis(int n_harmonics, double duration, const VectorXd& times);

ControlWaveform synthesize(const FourierParametrization& params, const TimeGrid& grid);
ControlWaveform synthesize(const FourierParametrization& params, int n_steps,
                           Integrator scheme = Integrator::magnus4);

/// d eps_c(t_i) / d coefficient. Synthesis is linear and channels do not mix,
/// so the full map is block diagonal with one copy of `basis` per channel.
struct SynthesisJacobian {
    MatrixXd basis;  ///< times x coefficients_per_channel
    int n_controls = 0;

    /// d eps_channel(t_row) / d coefficient(channel', col).
    double entry(Eigen::Index row, int channel, int coefficient_channel, Eigen::Index col) const {
        return channel == coefficient_channel ? basis(row, col) : 0.0;
    }
    /// Jacobian-vector product: flat coefficient direction -> times x channels.
    MatrixXd apply(const VectorXd& direction) const;
    /// Vector-Jacobian product: times x channels cotangent -> flat coefficients.
    VectorXd transpose_apply(const MatrixXd& cotangent) const;
};

/// Jacobian at the n_steps + 1 grid points.
SynthesisJacobian synthesis_jacobian(const FourierParametrization& params, int n_steps);
/// Jacobian at arbitrary times (used with the integrator nodes).
SynthesisJacobian synthesis_jacobian(const FourierParametrization& params, const VectorXd& times);

/// max(0, |(eps_2j, eps_2j+1)| - bound) per sample row and channel pair.
MatrixXd amplitude_violation(const ControlWaveform& waveform, double bound);
MatrixXd amplitude_violation(const MatrixXd& samples, double bound);

/// Largest pair modulus over the given samples.
double max_pair_amplitude(const MatrixXd& samples);

/// CSV with header `t,eps_1,...,eps_m`, one row per grid point.
void write_waveform_csv(std::ostream& out, const ControlWaveform& waveform);
void write_waveform_csv(const std::string& path, const ControlWaveform& waveform);

/// Reads a waveform CSV back. Node samples are filled by local cubic
/// interpolation unless they coincide with grid points (midpoint scheme).
ControlWaveform read_waveform_csv(std::istream& in, Integrator scheme = Integrator::magnus4);
ControlWaveform read_waveform_csv(const std::string& path, Integrator scheme = Integrator::magnus4);

/// Re-samples a gridded waveform onto the nodes of `scheme`.
ControlWaveform from_grid_samples(const TimeGrid& grid, const MatrixXd& samples);

}  // namespace pulseforge
