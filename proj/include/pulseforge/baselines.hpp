#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pulseforge/control.hpp"
#include "pulseforge/minimax.hpp"
#include "pulseforge/objective.hpp"
#include "pulseforge/system_model.hpp"

namespace pulseforge {

/// Constant resonant drive on the |0>-|e> in-phase channel with area 2 pi at gamma = 1.
ControlWaveform naive_2pi_pulse(double duration, int n_steps, Integrator scheme = Integrator::magnus4);

/// Fourier form of the same pulse: a single DC coefficient.
FourierParametrization naive_2pi_parametrization(int n_harmonics, double duration, double amplitude_bound = 1.0);

/// One chirped hyperbolic-secant segment on [start, start + segment_duration).
struct SechPulseSpec {
    double peak_amplitude = 1.0;
    double width = 0.7;  ///< beta
    double chirp = 1.0;  ///< mu
    double carrier_detuning = 0.0;
    double phase = 0.0;
    int transition = 0;  ///< 0 drives |0>-|e>, 1 drives |1>-|e>
    double start = 0.0;
    double segment_duration = 1.0;

    void validate() const;
    /// Complex Rabi frequency of the envelope at time t (not gated to the segment).
    Complex rabi(double t) const;
};

/// Excite and de-excite |0> with a pi phase shift between the two pulses,
/// then a phase-compensating pair on |1>, each segment a quarter of `duration`.
std::vector<SechPulseSpec> default_sech_sequence(double duration = 24.0 * 3.14159265358979323846);

/// Samples the sum of all segments over [0, duration]. Throws if segments
/// overlap or leave [0, duration].
ControlWaveform sech_sequence(const std::vector<SechPulseSpec>& segments, double duration, int n_steps,
                              Integrator scheme = Integrator::magnus4);

struct LandscapeCell {
    double gamma = 0.0;
    double delta = 0.0;
    double worst_case_fidelity = 0.0;
    double trace_fidelity = 0.0;
};

struct Landscape {
    std::vector<double> gammas;
    std::vector<double> deltas;
    std::vector<LandscapeCell> cells;  ///< row-major, gamma is the row

    const LandscapeCell& at(std::size_t gi, std::size_t di) const { return cells[gi * deltas.size() + di]; }
};

/// `resolution` points spanning [lo, hi]; a single point when resolution is 1 (lo == hi required).
std::vector<double> linspace(double lo, double hi, int resolution);

/// F and T at every (gamma, delta) of the product grid. Cells are independent
/// and the result does not depend on the evaluation order or thread count.
Landscape landscape(const HamiltonianModel& model, const ControlWaveform& waveform, const TargetMap& target_map,
                    const std::vector<double>& gammas, const std::vector<double>& deltas, int threads = 1);

/// Replaces 1 - F and 1 - T along each gamma row by their running maximum
/// taken from the outer edge of the delta axis towards delta = 0, separately
/// for each sign of delta.
Landscape running_max(const Landscape& landscape);

/// `gamma,delta,F,T`, 12 significant digits.
void write_landscape_csv(std::ostream& out, const Landscape& landscape);
void write_landscape_csv(const std::string& path, const Landscape& landscape);
std::vector<LandscapeCell> read_landscape_csv(std::istream& in);

}  // namespace pulseforge
