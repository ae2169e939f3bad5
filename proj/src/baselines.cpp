#include "pulseforge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "pulseforge/parallel.hpp"
#include "pulseforge/propagator.hpp"

namespace pulseforge {

ControlWaveform naive_2pi_pulse(double duration, int n_steps, Integrator scheme) {
    if (!(duration > 0.0) || !std::isfinite(duration)) throw std::invalid_argument("duration must be positive");
    const double amplitude = 2.0 * std::numbers::pi / duration;
    return sample_waveform(TimeGrid(duration, n_steps, scheme), 4, [amplitude](double) {
        VectorXd e = VectorXd::Zero(4);
        e[0] = amplitude;
        return e;
    });
}

FourierParametrization naive_2pi_parametrization(int n_harmonics, double duration, double amplitude_bound) {
    FourierParametrization p = FourierParametrization::zeros(4, n_harmonics, duration, amplitude_bound);
    p.coefficients(0, 0) = 2.0 * std::numbers::pi / duration;
    p.validate();
    return p;
}

void SechPulseSpec::validate() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!(width > 0.0) || !finite(width)) throw std::invalid_argument("sech width must be positive");
    if (!(segment_duration > 0.0) || !finite(segment_duration)) {
        throw std::invalid_argument("sech segment_duration must be positive");
    }
    if (!finite(peak_amplitude) || !finite(chirp) || !finite(carrier_detuning) || !finite(phase) || !finite(start)) {
        throw std::invalid_argument("sech segment has a non-finite field");
    }
    if (transition != 0 && transition != 1) throw std::invalid_argument("sech transition must be 0 or 1");
}

Complex SechPulseSpec::rabi(double t) const {
    const double x = width * (t - (start + 0.5 * segment_duration));
    const double c = std::cosh(x);
    return peak_amplitude / c * std::polar(1.0, chirp * std::log(c) + carrier_detuning * t + phase);
}

std::vector<SechPulseSpec> default_sech_sequence(double duration) {
    const double quarter = duration / 4.0;
    std::vector<SechPulseSpec> s(4);
    for (int k = 0; k < 4; ++k) {
        s[k].start = k * quarter;
        s[k].segment_duration = quarter;
        s[k].transition = k < 2 ? 0 : 1;
    }
    s[1].phase = std::numbers::pi;
    return s;
}

ControlWaveform sech_sequence(const std::vector<SechPulseSpec>& segments, double duration, int n_steps,
                              Integrator scheme) {
    const double slack = 1e-12 * duration;
    std::vector<const SechPulseSpec*> order;
    for (const auto& s : segments) {
        s.validate();
        if (s.start < -slack || s.start + s.segment_duration > duration + slack) {
            throw std::invalid_argument("sech segment leaves [0, duration]");
        }
        order.push_back(&s);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->start < order[i - 1]->start + order[i - 1]->segment_duration - slack) {
            throw std::invalid_argument("sech segments overlap");
        }
    }
    return sample_waveform(TimeGrid(duration, n_steps, scheme), 4, [&](double t) {
        VectorXd e = VectorXd::Zero(4);
        for (const auto* s : order) {
            const double end = s->start + s->segment_duration;
            const bool inside = (t >= s->start && t < end) || (t == duration && end >= duration - slack);
            if (!inside) continue;
            const Complex w = s->rabi(t);
            e[2 * s->transition] += w.real();
            e[2 * s->transition + 1] += w.imag();
        }
        return e;
    });
}

std::vector<double> linspace(double lo, double hi, int resolution) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("range must be finite");
    if (resolution < 1) throw std::invalid_argument("resolution must be at least 1");
    if (resolution == 1) {
        if (lo != hi) throw std::invalid_argument("a single-point range needs lo == hi");
        return {lo};
    }
    std::vector<double> v(static_cast<std::size_t>(resolution));
    for (int i = 0; i < resolution; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (resolution - 1);
    v.back() = hi;
    return v;
}

Landscape landscape(const HamiltonianModel& model, const ControlWaveform& waveform, const TargetMap& target_map,
                    const std::vector<double>& gammas, const std::vector<double>& deltas, int threads) {
    if (gammas.empty() || deltas.empty()) throw std::invalid_argument("landscape axes must be non-empty");
    Landscape out;
    out.gammas = gammas;
    out.deltas = deltas;
    out.cells.resize(gammas.size() * deltas.size());
    parallel_for(out.cells.size(), threads, [&](std::size_t i) {
        const SystemParameters xi{gammas[i / deltas.size()], deltas[i % deltas.size()]};
        xi.validate();
        const EvolutionTrajectory traj = propagate_forward(model, xi, waveform);
        const FidelityReport r = fidelity_report(target_map(xi), traj.final_operator(), model.qubit_indices());
        out.cells[i] = {xi.gamma, xi.delta, r.worst_case_fidelity, r.trace_fidelity};
    });
    return out;
}

Landscape running_max(const Landscape& in) {
    Landscape out = in;
    const std::size_t nd = in.deltas.size();
    std::vector<std::size_t> idx(nd);
    for (std::size_t i = 0; i < nd; ++i) idx[i] = i;
    // visit each sign branch from |delta| large to small
    std::vector<std::size_t> neg, pos;
    for (std::size_t i : idx) (in.deltas[i] < 0.0 ? neg : pos).push_back(i);
    std::sort(neg.begin(), neg.end(), [&](auto a, auto b) { return in.deltas[a] < in.deltas[b]; });
    std::sort(pos.begin(), pos.end(), [&](auto a, auto b) { return in.deltas[a] > in.deltas[b]; });
    for (std::size_t g = 0; g < in.gammas.size(); ++g) {
        for (const auto* branch : {&neg, &pos}) {
            double f_err = 0.0, t_err = 0.0;
            for (std::size_t d : *branch) {
                LandscapeCell& c = out.cells[g * nd + d];
                f_err = std::max(f_err, 1.0 - c.worst_case_fidelity);
                t_err = std::max(t_err, 1.0 - c.trace_fidelity);
                c.worst_case_fidelity = 1.0 - f_err;
                c.trace_fidelity = 1.0 - t_err;
            }
        }
    }
    return out;
}

void write_landscape_csv(std::ostream& out, const Landscape& l) {
    out << "gamma,delta,F,T\n";
    out.precision(12);
    for (const auto& c : l.cells) {
        out << c.gamma << ',' << c.delta << ',' << c.worst_case_fidelity << ',' << c.trace_fidelity << '\n';
    }
}

void write_landscape_csv(const std::string& path, const Landscape& l) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_landscape_csv(f, l);
    if (!f) throw std::runtime_error("failed writing " + path);
}

std::vector<LandscapeCell> read_landscape_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "gamma,delta,F,T") throw std::runtime_error("bad landscape header");
    std::vector<LandscapeCell> cells;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream s(line);
        LandscapeCell c;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(s >> c.gamma >> c1 >> c.delta >> c2 >> c.worst_case_fidelity >> c3 >> c.trace_fidelity) || c1 != ',' ||
            c2 != ',' || c3 != ',') {
            throw std::runtime_error("malformed landscape row " + std::to_string(row));
        }
        cells.push_back(c);
    }
    return cells;
}

}  // namespace pulseforge
