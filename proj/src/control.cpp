#include "pulseforge/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <vector>

namespace pulseforge {

FourierParametrization FourierParametrization::zeros(int n_controls, int n_harmonics, double duration,
                                                     double amplitude_bound) {
    FourierParametrization p;
    p.n_controls = n_controls;
    p.n_harmonics = n_harmonics;
    p.duration = duration;
    p.amplitude_bound = amplitude_bound;
    p.coefficients = MatrixXd::Zero(n_controls, 2 * n_harmonics + 1);
    p.validate();
    return p;
}

VectorXd FourierParametrization::flat() const {
    VectorXd v(n_coefficients());
    const int per = coefficients_per_channel();
    for (int c = 0; c < n_controls; ++c) v.segment(c * per, per) = coefficients.row(c).transpose();
    return v;
}

void FourierParametrization::set_flat(const VectorXd& values) {
    if (values.size() != n_coefficients()) {
        throw std::invalid_argument("flat coefficient vector has wrong length");
    }
    const int per = coefficients_per_channel();
    coefficients.resize(n_controls, per);
    for (int c = 0; c < n_controls; ++c) coefficients.row(c) = values.segment(c * per, per).transpose();
}

void FourierParametrization::validate() const {
    if (n_controls < 1) throw std::invalid_argument("n_controls must be at least 1");
    if (n_harmonics < 0) throw std::invalid_argument("n_harmonics must be non-negative");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw std::invalid_argument("duration must be positive");
    if (!(amplitude_bound > 0.0) || !std::isfinite(amplitude_bound)) {
        throw std::invalid_argument("amplitude_bound must be positive");
    }
    if (coefficients.rows() != n_controls || coefficients.cols() != coefficients_per_channel()) {
        throw std::invalid_argument("coefficient matrix shape does not match n_controls x (2K+1)");
    }
    if (!coefficients.allFinite()) throw std::invalid_argument("non-finite Fourier coefficient");
}

MatrixXd fourier_basis(int n_harmonics, double duration, const VectorXd& times) {
    MatrixXd b(times.size(), 2 * n_harmonics + 1);
    const double omega = 2.0 * std::numbers::pi / duration;
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        b(i, 0) = 1.0;
        for (int k = 1; k <= n_harmonics; ++k) {
            const double arg = omega * k * times[i];
            b(i, k) = std::cos(arg);
            b(i, n_harmonics + k) = std::sin(arg);
        }
    }
    return b;
}

ControlWaveform synthesize(const FourierParametrization& params, const TimeGrid& grid) {
    params.validate();
    if (std::abs(grid.duration - params.duration) > 1e-12 * params.duration) {
        throw std::invalid_argument("time grid duration differs from parametrization duration");
    }
    ControlWaveform w;
    w.grid = grid;
    const MatrixXd ct = params.coefficients.transpose();
    w.samples = fourier_basis(params.n_harmonics, params.duration, grid.points()) * ct;
    w.node_samples = fourier_basis(params.n_harmonics, params.duration, grid.nodes()) * ct;
    return w;
}

ControlWaveform synthesize(const FourierParametrization& params, int n_steps, Integrator scheme) {
    return synthesize(params, TimeGrid(params.duration, n_steps, scheme));
}

MatrixXd SynthesisJacobian::apply(const VectorXd& direction) const {
    const Eigen::Index per = basis.cols();
    if (direction.size() != per * n_controls) throw std::invalid_argument("direction has wrong length");
    MatrixXd out(basis.rows(), n_controls);
    for (int c = 0; c < n_controls; ++c) out.col(c) = basis * direction.segment(c * per, per);
    return out;
}

VectorXd SynthesisJacobian::transpose_apply(const MatrixXd& cotangent) const {
    const Eigen::Index per = basis.cols();
    if (cotangent.rows() != basis.rows() || cotangent.cols() != n_controls) {
        throw std::invalid_argument("cotangent shape does not match jacobian");
    }
    VectorXd out(per * n_controls);
    for (int c = 0; c < n_controls; ++c) out.segment(c * per, per) = basis.transpose() * cotangent.col(c);
    return out;
}

SynthesisJacobian synthesis_jacobian(const FourierParametrization& params, const VectorXd& times) {
    params.validate();
    return {fourier_basis(params.n_harmonics, params.duration, times), params.n_controls};
}

SynthesisJacobian synthesis_jacobian(const FourierParametrization& params, int n_steps) {
    return synthesis_jacobian(params, TimeGrid(params.duration, n_steps).points());
}

MatrixXd amplitude_violation(const MatrixXd& samples, double bound) {
    if (samples.cols() % 2 != 0) {
        throw std::invalid_argument("amplitude check needs channels in quadrature pairs (even channel count)");
    }
    const Eigen::Index pairs = samples.cols() / 2;
    MatrixXd v(samples.rows(), pairs);
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index p = 0; p < pairs; ++p) {
            const double r = std::hypot(samples(i, 2 * p), samples(i, 2 * p + 1));
            v(i, p) = std::max(0.0, r - bound);
        }
    }
    return v;
}

MatrixXd amplitude_violation(const ControlWaveform& waveform, double bound) {
    return amplitude_violation(waveform.samples, bound);
}

double max_pair_amplitude(const MatrixXd& samples) {
    return amplitude_violation(samples, 0.0).maxCoeff();
}

void write_waveform_csv(std::ostream& out, const ControlWaveform& waveform) {
    out << "t";
    for (int c = 0; c < waveform.n_channels(); ++c) out << ",eps_" << (c + 1);
    out << '\n';
    const VectorXd t = waveform.grid.points();
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        out << t[i];
        for (int c = 0; c < waveform.n_channels(); ++c) out << ',' << waveform.samples(i, c);
        out << '\n';
    }
}

void write_waveform_csv(const std::string& path, const ControlWaveform& waveform) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_waveform_csv(f, waveform);
}

namespace {

std::vector<double> split_doubles(const std::string& line) {
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
    }
    return values;
}

// Cubic Lagrange interpolation through the four grid points around t.
double cubic_at(const VectorXd& column, double h, double t) {
    const Eigen::Index n = column.size() - 1;
    if (n < 3) {
        const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(t / h), n - 1);
        const double s = t / h - static_cast<double>(i);
        return (1.0 - s) * column[i] + s * column[i + 1];
    }
    Eigen::Index i = static_cast<Eigen::Index>(std::floor(t / h)) - 1;
    i = std::clamp<Eigen::Index>(i, 0, n - 3);
    const double x = t / h - static_cast<double>(i);
    double value = 0.0;
    for (int j = 0; j < 4; ++j) {
        double w = 1.0;
        for (int k = 0; k < 4; ++k) {
            if (k != j) w *= (x - k) / static_cast<double>(j - k);
        }
        value += w * column[i + j];
    }
    return value;
}

}  // namespace

ControlWaveform from_grid_samples(const TimeGrid& grid, const MatrixXd& samples) {
    if (samples.rows() != grid.n_steps + 1) throw std::invalid_argument("sample count does not match grid");
    ControlWaveform w;
    w.grid = grid;
    w.samples = samples;
    const VectorXd nodes = grid.nodes();
    w.node_samples.resize(nodes.size(), samples.cols());
    if (grid.scheme == Integrator::midpoint) {
        for (int i = 0; i < grid.n_steps; ++i) {
            w.node_samples.row(2 * i) = samples.row(i);
            w.node_samples.row(2 * i + 1) = samples.row(i + 1);
        }
        return w;
    }
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
        const VectorXd column = samples.col(c);
        for (Eigen::Index i = 0; i < nodes.size(); ++i) w.node_samples(i, c) = cubic_at(column, grid.dt(), nodes[i]);
    }
    return w;
}

ControlWaveform read_waveform_csv(std::istream& in, Integrator scheme) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,", 0) != 0) {
        throw std::runtime_error("waveform CSV must start with a `t,eps_1,...` header");
    }
    const auto n_channels = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto values = split_doubles(line);
        if (static_cast<Eigen::Index>(values.size()) != n_channels + 1) {
            throw std::runtime_error("waveform CSV row has wrong column count");
        }
        rows.push_back(std::move(values));
    }
    if (rows.size() < 2) throw std::runtime_error("waveform CSV needs at least two rows");
    const int n_steps = static_cast<int>(rows.size()) - 1;
    const double duration = rows.back()[0];
    if (std::abs(rows.front()[0]) > 0.0) throw std::runtime_error("waveform CSV must start at t = 0");
    MatrixXd samples(rows.size(), n_channels);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double expected = duration * static_cast<double>(i) / n_steps;
        if (std::abs(rows[i][0] - expected) > 1e-9 * duration) {
            throw std::runtime_error("waveform CSV time column is not uniformly spaced");
        }
        for (Eigen::Index c = 0; c < n_channels; ++c) samples(static_cast<Eigen::Index>(i), c) = rows[i][c + 1];
    }
    return from_grid_samples(TimeGrid(duration, n_steps, scheme), samples);
}

ControlWaveform read_waveform_csv(const std::string& path, Integrator scheme) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open waveform file " + path);
    return read_waveform_csv(f, scheme);
}

}  // namespace pulseforge
