#include "cli.hpp"

#include <yaml-cpp/yaml.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <set>
#include <sstream>

#include "pulseforge/checks.hpp"
#include "pulseforge/parallel.hpp"
#include "pulseforge/propagator.hpp"

namespace pulseforge::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& what) const {
        std::ostringstream msg;
        msg << source_;
        if (node.IsDefined() && node.Mark().line >= 0) msg << ':' << node.Mark().line + 1;
        msg << ": " << field << ": " << what;
        throw ConfigError(msg.str());
    }

    void only_keys(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) const {
        if (!map.IsMap()) fail(map, path.empty() ? "<root>" : path, "expected a block of key-value pairs");
        for (const auto& kv : map) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) fail(kv.first, join(path, key), "unknown key");
        }
    }

    double number(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, field, "expected a number");
        std::string s = node.Scalar();
        double scale = 1.0;
        // Multiples of pi, e.g. "24pi" or "24*pi".
        if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
            s.resize(s.size() - 2);
            if (!s.empty() && s.back() == '*') s.pop_back();
            if (s.empty()) s = "1";
            scale = std::numbers::pi;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            fail(node, field, "expected a number, got '" + node.Scalar() + "'");
        }
        if (used != s.size()) fail(node, field, "expected a number, got '" + node.Scalar() + "'");
        if (!std::isfinite(v)) fail(node, field, "must be finite");
        return v * scale;
    }

    double positive(const YAML::Node& node, const std::string& field) const {
        const double v = number(node, field);
        if (!(v > 0.0)) fail(node, field, "must be positive");
        return v;
    }

    double non_negative(const YAML::Node& node, const std::string& field) const {
        const double v = number(node, field);
        if (v < 0.0) fail(node, field, "must be non-negative");
        return v;
    }

    long long integer(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, field, "expected an integer");
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(node.Scalar(), &used, 0);
        } catch (const std::exception&) {
            fail(node, field, "expected an integer, got '" + node.Scalar() + "'");
        }
        if (used != node.Scalar().size()) fail(node, field, "expected an integer, got '" + node.Scalar() + "'");
        return v;
    }

    int count(const YAML::Node& node, const std::string& field, long long min_value) const {
        const long long v = integer(node, field);
        if (v < min_value || v > std::numeric_limits<int>::max()) {
            fail(node, field, "must be an integer >= " + std::to_string(min_value));
        }
        return static_cast<int>(v);
    }

    std::string text(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, field, "expected a string");
        return node.Scalar();
    }

    std::string choice(const YAML::Node& node, const std::string& field, const std::set<std::string>& options) const {
        const std::string v = text(node, field);
        if (!options.count(v)) {
            std::string list;
            for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
            fail(node, field, "unknown value '" + v + "' (expected one of " + list + ")");
        }
        return v;
    }

    static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

private:
    std::string source_;
};

AxisSpec read_axis(const Reader& r, const YAML::Node& node, const std::string& field) {
    if (!node.IsSequence() || node.size() != 3) r.fail(node, field, "expected [lo, hi, resolution]");
    AxisSpec a{r.number(node[0], field), r.number(node[1], field), r.count(node[2], field, 1)};
    if (a.resolution == 1 && a.lo != a.hi) r.fail(node, field, "a single-point axis needs lo == hi");
    if (a.hi < a.lo) r.fail(node, field, "hi must not be below lo");
    return a;
}

SechPulseSpec read_sech(const Reader& r, const YAML::Node& node, const std::string& path) {
    r.only_keys(node, path,
                {"transition", "start", "duration", "peak_amplitude", "width", "chirp", "phase", "carrier_detuning"});
    SechPulseSpec s;
    if (node["transition"]) {
        s.transition = r.count(node["transition"], path + ".transition", 0);
        if (s.transition > 1) r.fail(node["transition"], path + ".transition", "must be 0 or 1");
    }
    if (node["start"]) s.start = r.non_negative(node["start"], path + ".start");
    if (!node["duration"]) r.fail(node, path + ".duration", "missing");
    s.segment_duration = r.positive(node["duration"], path + ".duration");
    if (node["peak_amplitude"]) s.peak_amplitude = r.number(node["peak_amplitude"], path + ".peak_amplitude");
    if (node["width"]) s.width = r.positive(node["width"], path + ".width");
    if (node["chirp"]) s.chirp = r.number(node["chirp"], path + ".chirp");
    if (node["phase"]) s.phase = r.number(node["phase"], path + ".phase");
    if (node["carrier_detuning"]) s.carrier_detuning = r.number(node["carrier_detuning"], path + ".carrier_detuning");
    return s;
}

ParameterGrid read_grid(const Reader& r, const YAML::Node& node, std::string& name) {
    if (node.IsScalar()) {
        name = r.choice(node, "grid", {"default_reqc_49"});
        return default_reqc_grid();
    }
    r.only_keys(node, "grid", {"points", "weights"});
    const YAML::Node points = node["points"];
    if (!points || !points.IsSequence() || points.size() == 0) {
        r.fail(points ? points : node, "grid.points", "expected a non-empty list of [gamma, delta]");
    }
    ParameterGrid g;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::string field = "grid.points[" + std::to_string(i) + "]";
        const YAML::Node p = points[i];
        if (!p.IsSequence() || p.size() != 2) r.fail(p, field, "expected [gamma, delta]");
        g.points.push_back({r.non_negative(p[0], field + ".gamma"), r.number(p[1], field + ".delta")});
    }
    if (const YAML::Node w = node["weights"]) {
        if (!w.IsSequence() || w.size() != points.size()) r.fail(w, "grid.weights", "expected one weight per point");
        for (std::size_t i = 0; i < w.size(); ++i) g.weights.push_back(r.positive(w[i], "grid.weights"));
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(node, "grid", e.what());
    }
    name = "inline";
    return g;
}

double max_step_doubling(const HamiltonianModel& model, const ParameterGrid& grid,
                         const std::function<ControlWaveform(const TimeGrid&)>& make, const TimeGrid& tg,
                         int threads) {
    std::vector<double> errors(grid.size());
    parallel_for(grid.size(), threads,
                 [&](std::size_t i) { errors[i] = step_doubling_error(model, grid.points[i], make, tg); });
    return *std::max_element(errors.begin(), errors.end());
}

/// Per-point J, T and F of a fixed waveform.
json point_reports(const HamiltonianModel& model, const ParameterGrid& grid, const TargetMap& targets,
                   const ControlWaveform& waveform, int threads, double& j_max, double& worst_error,
                   double& unitarity) {
    struct Row {
        double j, t, f, defect;
        bool identity;
    };
    std::vector<Row> rows(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        const SystemParameters& xi = grid.points[i];
        const TargetGate target = targets(xi);
        const EvolutionTrajectory traj = propagate_forward(model, xi, waveform);
        const FidelityReport rep = fidelity_report(target, traj.final_operator(), model.qubit_indices());
        const double defect = model.hermitian() ? unitarity_defect(traj) : 0.0;
        rows[i] = {1.0 - rep.trace_fidelity * rep.trace_fidelity, rep.trace_fidelity, rep.worst_case_fidelity, defect,
                   target.matrix.isApprox(CMatrix::Identity(target.size(), target.size()))};
    });
    json out = json::array();
    j_max = 0.0;
    worst_error = 0.0;
    unitarity = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back({{"gamma", grid.points[i].gamma},
                       {"delta", grid.points[i].delta},
                       {"target", rows[i].identity ? "identity" : "gate"},
                       {"J", rows[i].j},
                       {"T", rows[i].t},
                       {"F", rows[i].f}});
        j_max = std::max(j_max, rows[i].j);
        worst_error = std::max(worst_error, 1.0 - rows[i].f);
        unitarity = std::max(unitarity, rows[i].defect);
    }
    return out;
}

json coefficients_json(const FourierParametrization& p) {
    json values = json::array();
    for (Eigen::Index c = 0; c < p.coefficients.rows(); ++c) {
        std::vector<double> row(static_cast<std::size_t>(p.coefficients.cols()));
        for (Eigen::Index k = 0; k < p.coefficients.cols(); ++k) row[static_cast<std::size_t>(k)] = p.coefficients(c, k);
        values.push_back(row);
    }
    return {{"n_controls", p.n_controls},
            {"n_harmonics", p.n_harmonics},
            {"duration", p.duration},
            {"amplitude_bound", p.amplitude_bound},
            {"layout", "per channel: dc, cos_1..cos_K, sin_1..sin_K"},
            {"values", values}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Heat map of 1 - F from landscape.csv (gamma rows, delta columns)."""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

src = sys.argv[1] if len(sys.argv) > 1 else "landscape.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else src.rsplit(".", 1)[0] + ".png"
with open(src, newline="") as f:
    rows = [(float(r["gamma"]), float(r["delta"]), float(r["F"])) for r in csv.DictReader(f)]
gammas = sorted({r[0] for r in rows})
deltas = sorted({r[1] for r in rows})
err = np.full((len(gammas), len(deltas)), np.nan)
for g, d, fid in rows:
    err[gammas.index(g), deltas.index(d)] = max(1.0 - fid, 1e-16)
fig, ax = plt.subplots(figsize=(7, 4))
if len(gammas) > 1 and len(deltas) > 1:
    mesh = ax.pcolormesh(deltas, gammas, np.log10(err), shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10(1 - F)")
    ax.set_ylabel("gamma")
else:
    ax.semilogy(deltas if len(gammas) == 1 else gammas, err.ravel())
    ax.set_ylabel("1 - F")
ax.set_xlabel("delta / Omega_0")
fig.tight_layout()
fig.savefig(dst, dpi=150)
print(dst)
)PY";

struct Globals {
    int threads = 0;
    bool quiet = false;
};

FourierParametrization initial_parameters(const RunConfig& c, int n_controls) {
    if (c.initial == "naive") {
        return naive_initial_guess(n_controls, c.harmonics, c.duration, c.amplitude_bound, c.seed, c.perturbation);
    }
    if (c.initial == "resonant") {
        return naive_initial_guess(n_controls, c.harmonics, c.duration, c.amplitude_bound, c.seed, 0.0);
    }
    FourierParametrization p = read_result_coefficients(c.initial);
    if (p.n_controls != n_controls || std::abs(p.duration - c.duration) > 1e-9 * c.duration) {
        throw ConfigError("initial coefficients in " + c.initial + " do not match the model or duration");
    }
    p.amplitude_bound = c.amplitude_bound;
    return p;
}

int cmd_optimize(const std::string& config_path, const std::string& output_override, const Globals& g,
                 std::ostream& out, std::ostream& err) {
    RunConfig c = load_config(config_path);
    if (!output_override.empty()) c.output = output_override;
    const auto model = make_model(c);
    const TargetMap targets = make_target_map(c);
    const int threads = resolve_threads(g.threads);
    const FourierParametrization initial = initial_parameters(c, model->n_controls());

    EvaluationSettings settings{TimeGrid(c.duration, c.n_steps, c.integrator), c.penalty, c.boundary, threads};
    OptimizerOptions opts = c.optimizer;
    if (!g.quiet) {
        opts.progress = [&err](const HistoryEntry& h) {
            if (h.iteration % 25 == 0) {
                err << "iter " << h.iteration << "  p=" << h.sharpness << "  J_max=" << h.j_max
                    << "  aggregate=" << h.aggregate << "  |g|=" << h.grad_norm << "  violation=" << h.max_violation
                    << std::endl;
            }
        };
    }
    const MinimaxResult r = optimize(*model, c.grid, targets, initial, opts, settings);

    // Report at the first resolution whose step doubling meets the tolerance.
    auto make = [&r](const TimeGrid& tg) { return synthesize(r.coefficients, tg); };
    int verified = c.n_steps;
    double sd = max_step_doubling(*model, c.grid, make, TimeGrid(c.duration, verified, c.integrator), threads);
    while (sd > c.step_doubling_tolerance && 2 * verified <= c.max_verify_steps) {
        verified *= 2;
        sd = max_step_doubling(*model, c.grid, make, TimeGrid(c.duration, verified, c.integrator), threads);
    }
    double j_max_verified = 0.0, worst_error = 0.0, unitarity = 0.0;
    const ControlWaveform verified_waveform = synthesize(r.coefficients, TimeGrid(c.duration, verified, c.integrator));
    json points = point_reports(*model, c.grid, targets, verified_waveform, threads, j_max_verified, worst_error,
                                unitarity);

    fs::create_directories(c.output);
    std::vector<double> per_point(r.per_point_J.data(), r.per_point_J.data() + r.per_point_J.size());
    json result = {{"coefficients", coefficients_json(r.coefficients)},
                   {"per_point_J", per_point},
                   {"J_max", r.J_max},
                   {"termination", to_string(r.termination)},
                   {"converged", r.converged()},
                   {"iterations", r.history.empty() ? 0 : r.history.back().iteration},
                   {"evaluations", r.evaluations},
                   {"max_amplitude_violation", r.max_violation},
                   {"n_steps", c.n_steps},
                   {"integrator", to_string(c.integrator)},
                   {"grid", c.grid_name},
                   {"verification",
                    {{"n_steps", verified},
                     {"step_doubling_error", sd},
                     {"step_doubling_tolerance", c.step_doubling_tolerance},
                     {"step_doubling_passed", sd <= c.step_doubling_tolerance},
                     {"unitarity_defect", unitarity},
                     {"J_max", j_max_verified},
                     {"max_infidelity", worst_error},
                     {"points", points}}}};
    write_json(fs::path(c.output) / "result.json", result);
    {
        std::ofstream h(fs::path(c.output) / "history.csv");
        write_history_csv(h, r.history);
    }
    write_waveform_csv((fs::path(c.output) / "waveform.csv").string(),
                       synthesize(r.coefficients, TimeGrid(c.duration, c.n_steps, c.integrator)));

    out << "J_max " << r.J_max << "  max 1-F " << worst_error << "  termination " << to_string(r.termination)
        << "  step-doubling " << sd << " at n_steps " << verified << '\n';
    return r.converged() ? ok : not_converged;
}

ControlWaveform baseline_waveform(const RunConfig& c, const std::string& kind) {
    if (kind == "naive") return naive_2pi_pulse(c.duration, c.n_steps, c.integrator);
    return sech_sequence(c.sech.empty() ? default_sech_sequence(c.duration) : c.sech, c.duration, c.n_steps,
                         c.integrator);
}

int cmd_landscape(const std::string& config_path, const std::string& waveform_path, const std::string& result_path,
                  const std::string& baseline, bool with_running_max, const std::string& output_override,
                  const Globals& g, std::ostream& out, std::ostream& err) {
    RunConfig c = load_config(config_path);
    if (!output_override.empty()) c.output = output_override;
    const int sources = !waveform_path.empty() + !result_path.empty() + !baseline.empty();
    if (sources != 1) {
        err << "landscape needs exactly one of --waveform, --result or --baseline\n";
        return usage_error;
    }
    const auto model = make_model(c);
    ControlWaveform waveform;
    if (!baseline.empty()) {
        if (model->n_controls() != 4) throw ConfigError("baseline pulses need the reqc model");
        waveform = baseline_waveform(c, baseline);
    } else if (!result_path.empty()) {
        waveform = synthesize(read_result_coefficients(result_path), TimeGrid(c.duration, c.n_steps, c.integrator));
    } else {
        if (!fs::exists(waveform_path)) {
            err << "waveform file not found: " << waveform_path << '\n';
            return usage_error;
        }
        waveform = read_waveform_csv(waveform_path, c.integrator);
    }
    if (waveform.n_channels() != model->n_controls()) {
        throw ConfigError("waveform has " + std::to_string(waveform.n_channels()) + " channels, model expects " +
                          std::to_string(model->n_controls()));
    }
    const Landscape l = landscape(*model, waveform, make_target_map(c),
                                  linspace(c.gamma_axis.lo, c.gamma_axis.hi, c.gamma_axis.resolution),
                                  linspace(c.delta_axis.lo, c.delta_axis.hi, c.delta_axis.resolution),
                                  resolve_threads(g.threads));
    fs::create_directories(c.output);
    write_landscape_csv((fs::path(c.output) / "landscape.csv").string(), l);
    if (with_running_max) write_landscape_csv((fs::path(c.output) / "landscape_runmax.csv").string(), running_max(l));
    {
        const fs::path script = fs::path(c.output) / "plot_landscape.py";
        std::ofstream f(script);
        f << kPlotScript;
        if (!f) throw std::runtime_error("failed writing " + script.string());
    }
    out << "wrote " << l.cells.size() << " cells to " << (fs::path(c.output) / "landscape.csv").string() << '\n';
    return ok;
}

int cmd_baseline(const std::string& config_path, const std::string& kind, const std::string& output_override,
                 const Globals& g, std::ostream& out) {
    RunConfig c = load_config(config_path);
    if (!output_override.empty()) c.output = output_override;
    const auto model = make_model(c);
    if (model->n_controls() != 4) throw ConfigError("baseline pulses need the reqc model");
    const ControlWaveform w = baseline_waveform(c, kind);
    double j_max = 0.0, worst = 0.0, unitarity = 0.0;
    json points = point_reports(*model, c.grid, make_target_map(c), w, resolve_threads(g.threads), j_max, worst,
                                unitarity);
    fs::create_directories(c.output);
    write_json(fs::path(c.output) / "baseline.json", {{"kind", kind},
                                                      {"J_max", j_max},
                                                      {"max_infidelity", worst},
                                                      {"n_steps", c.n_steps},
                                                      {"grid", c.grid_name},
                                                      {"points", points}});
    write_waveform_csv((fs::path(c.output) / "waveform.csv").string(), w);
    out << kind << " baseline: J_max " << j_max << "  max 1-F " << worst << '\n';
    return ok;
}

int cmd_check(const CheckOptions& options, std::ostream& out, std::ostream& err) {
    bool all = true;
    for (const SuiteResult& s : run_checks(options)) {
        out << s.name << "  max_error " << s.max_error << "  tolerance " << s.tolerance << "  "
            << (s.passed ? "PASS" : "FAIL") << '\n';
        if (!s.passed) {
            all = false;
            err << "failing case for " << s.name << ": " << json(s.failing_case).dump() << '\n';
        }
    }
    return all ? ok : check_failed;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": syntax error: " + e.msg);
    }
    const Reader r(source);
    RunConfig c;
    if (root.IsNull()) return c;
    r.only_keys(root, "", {"model", "decay_rate", "target", "far_detuning", "grid", "parametrization", "optimizer",
                           "penalty", "verification", "landscape", "sech", "output"});
    if (root["model"]) c.model = r.choice(root["model"], "model", {"reqc", "stub"});
    if (root["decay_rate"]) c.decay_rate = r.non_negative(root["decay_rate"], "decay_rate");
    if (root["target"]) c.target = r.choice(root["target"], "target", {"phase_gate", "identity"});
    if (root["far_detuning"]) c.far_detuning = r.positive(root["far_detuning"], "far_detuning");
    if (root["grid"]) c.grid = read_grid(r, root["grid"], c.grid_name);

    if (const YAML::Node p = root["parametrization"]) {
        r.only_keys(p, "parametrization",
                    {"harmonics", "duration", "amplitude_bound", "n_steps", "integrator", "initial", "perturbation"});
        if (p["harmonics"]) c.harmonics = r.count(p["harmonics"], "parametrization.harmonics", 0);
        if (p["duration"]) c.duration = r.positive(p["duration"], "parametrization.duration");
        if (p["amplitude_bound"]) c.amplitude_bound = r.positive(p["amplitude_bound"], "parametrization.amplitude_bound");
        if (p["n_steps"]) c.n_steps = r.count(p["n_steps"], "parametrization.n_steps", 1);
        if (p["integrator"]) {
            c.integrator = parse_integrator(
                r.choice(p["integrator"], "parametrization.integrator", {"midpoint", "magnus4"}));
        }
        if (p["initial"]) c.initial = r.text(p["initial"], "parametrization.initial");
        if (p["perturbation"]) c.perturbation = r.non_negative(p["perturbation"], "parametrization.perturbation");
    }

    if (const YAML::Node o = root["optimizer"]) {
        r.only_keys(o, "optimizer",
                    {"sharpness", "gradient_tolerance", "step_tolerance", "max_iterations", "memory", "seed",
                     "boundary", "amplitude_tolerance", "constraint_oversampling", "constraint_rounds",
                     "initial_penalty", "enforce_amplitude"});
        if (const YAML::Node s = o["sharpness"]) {
            if (!s.IsSequence() || s.size() == 0) r.fail(s, "optimizer.sharpness", "expected a non-empty list");
            c.optimizer.sharpness_schedule.clear();
            for (const auto& v : s) c.optimizer.sharpness_schedule.push_back(r.positive(v, "optimizer.sharpness"));
        }
        if (o["gradient_tolerance"]) {
            c.optimizer.gradient_tolerance = r.positive(o["gradient_tolerance"], "optimizer.gradient_tolerance");
        }
        if (o["step_tolerance"]) c.optimizer.step_tolerance = r.positive(o["step_tolerance"], "optimizer.step_tolerance");
        if (o["max_iterations"]) c.optimizer.max_iterations = r.count(o["max_iterations"], "optimizer.max_iterations", 0);
        if (o["memory"]) c.optimizer.lbfgs_memory = r.count(o["memory"], "optimizer.memory", 1);
        if (o["seed"]) {
            const long long s = r.integer(o["seed"], "optimizer.seed");
            if (s < 0) r.fail(o["seed"], "optimizer.seed", "must be non-negative");
            c.seed = static_cast<std::uint64_t>(s);
        }
        if (o["boundary"]) {
            c.boundary = r.choice(o["boundary"], "optimizer.boundary", {"standard", "optimized"}) == "optimized"
                             ? BoundaryKind::optimized
                             : BoundaryKind::standard;
        }
        if (o["amplitude_tolerance"]) {
            c.optimizer.amplitude_tolerance = r.positive(o["amplitude_tolerance"], "optimizer.amplitude_tolerance");
        }
        if (o["constraint_oversampling"]) {
            c.optimizer.constraint_oversampling =
                r.count(o["constraint_oversampling"], "optimizer.constraint_oversampling", 1);
        }
        if (o["constraint_rounds"]) {
            c.optimizer.max_constraint_rounds = r.count(o["constraint_rounds"], "optimizer.constraint_rounds", 1);
        }
        if (o["initial_penalty"]) {
            c.optimizer.initial_penalty = r.positive(o["initial_penalty"], "optimizer.initial_penalty");
        }
        if (o["enforce_amplitude"]) {
            c.optimizer.enforce_amplitude =
                r.choice(o["enforce_amplitude"], "optimizer.enforce_amplitude", {"true", "false"}) == "true";
        }
    }

    if (const YAML::Node p = root["penalty"]) {
        r.only_keys(p, "penalty", {"form", "weight"});
        if (p["form"]) {
            c.penalty.form = r.choice(p["form"], "penalty.form", {"none", "quadratic"}) == "quadratic"
                                 ? PenaltyForm::quadratic
                                 : PenaltyForm::none;
        }
        if (p["weight"]) c.penalty.weight = r.non_negative(p["weight"], "penalty.weight");
    }

    if (const YAML::Node v = root["verification"]) {
        r.only_keys(v, "verification", {"step_doubling_tolerance", "max_steps"});
        if (v["step_doubling_tolerance"]) {
            c.step_doubling_tolerance = r.positive(v["step_doubling_tolerance"], "verification.step_doubling_tolerance");
        }
        if (v["max_steps"]) c.max_verify_steps = r.count(v["max_steps"], "verification.max_steps", 1);
    }

    if (const YAML::Node l = root["landscape"]) {
        r.only_keys(l, "landscape", {"gamma", "delta"});
        if (l["gamma"]) c.gamma_axis = read_axis(r, l["gamma"], "landscape.gamma");
        if (l["delta"]) c.delta_axis = read_axis(r, l["delta"], "landscape.delta");
        if (c.gamma_axis.lo < 0.0) r.fail(l["gamma"], "landscape.gamma", "gamma must be non-negative");
    }

    if (const YAML::Node s = root["sech"]) {
        if (!s.IsSequence()) r.fail(s, "sech", "expected a list of segments");
        for (std::size_t i = 0; i < s.size(); ++i) c.sech.push_back(read_sech(r, s[i], "sech[" + std::to_string(i) + "]"));
    }

    if (root["output"]) c.output = r.text(root["output"], "output");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    std::ostringstream s;
    s << f.rdbuf();
    return parse_config(s.str(), path);
}

std::unique_ptr<HamiltonianModel> make_model(const RunConfig& config) {
    if (config.model == "stub") return std::make_unique<TwoLevelModel>();
    return std::make_unique<ReqcModel>(config.decay_rate);
}

TargetMap make_target_map(const RunConfig& config) {
    if (config.target == "identity") return [](const SystemParameters&) { return identity_target(2); };
    return reqc_target_map(config.far_detuning);
}

FourierParametrization read_result_coefficients(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open result file");
    json j;
    try {
        f >> j;
        const json& c = j.at("coefficients");
        FourierParametrization p = FourierParametrization::zeros(c.at("n_controls").get<int>(),
                                                                 c.at("n_harmonics").get<int>(),
                                                                 c.at("duration").get<double>(),
                                                                 c.at("amplitude_bound").get<double>());
        const json& v = c.at("values");
        if (v.size() != static_cast<std::size_t>(p.n_controls)) throw std::runtime_error("wrong channel count");
        for (int ch = 0; ch < p.n_controls; ++ch) {
            const auto row = v.at(static_cast<std::size_t>(ch)).get<std::vector<double>>();
            if (row.size() != static_cast<std::size_t>(p.coefficients_per_channel())) {
                throw std::runtime_error("wrong coefficient count in channel " + std::to_string(ch));
            }
            for (std::size_t k = 0; k < row.size(); ++k) p.coefficients(ch, static_cast<Eigen::Index>(k)) = row[k];
        }
        p.validate();
        return p;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": malformed result file: " + e.what());
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust quantum pulse design by adjoint gradients and minimax optimization", "pulseforge"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (default: PULSEFORGE_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "suppress progress output");

    std::string config, output, waveform, result, baseline, kind = "naive";
    bool with_running_max = false;

    auto* opt = app.add_subcommand("optimize", "run the minimax optimization described by a config file");
    opt->add_option("config", config, "config file")->required();
    opt->add_option("--output", output, "output directory (overrides the config)");

    auto* land = app.add_subcommand("landscape", "F and T over a (gamma, delta) grid");
    land->add_option("config", config, "config file")->required();
    land->add_option("--waveform", waveform, "waveform CSV");
    land->add_option("--result", result, "result.json whose coefficients define the pulse");
    land->add_option("--baseline", baseline, "built-in pulse")->check(CLI::IsMember({"sech", "naive"}));
    land->add_flag("--running-max", with_running_max, "also write landscape_runmax.csv");
    land->add_option("--output", output, "output directory (overrides the config)");

    auto* base = app.add_subcommand("baseline", "evaluate a built-in pulse on the config grid");
    base->add_option("config", config, "config file")->required();
    base->add_option("--kind", kind, "naive or sech")->check(CLI::IsMember({"sech", "naive"}));
    base->add_option("--output", output, "output directory (overrides the config)");

    CheckOptions checks;
    bool flip = false;
    auto* chk = app.add_subcommand("check", "run the gradient, unitarity, fidelity-bound and boundary suites");
    chk->add_option("--seed", checks.seed, "random seed");
    chk->add_option("--gradient-cases", checks.gradient_cases)->check(CLI::NonNegativeNumber);
    chk->add_option("--unitarity-cases", checks.unitarity_cases)->check(CLI::NonNegativeNumber);
    chk->add_option("--bound-samples", checks.bound_samples)->check(CLI::NonNegativeNumber);
    chk->add_option("--boundary-cases", checks.boundary_cases)->check(CLI::NonNegativeNumber);
    chk->add_flag("--inject-gradient-sign-flip", flip)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage_error;
    }

    try {
        if (*opt) return cmd_optimize(config, output, g, out, err);
        if (*land) return cmd_landscape(config, waveform, result, baseline, with_running_max, output, g, out, err);
        if (*base) return cmd_baseline(config, kind, output, g, out);
        checks.flip_gradient_sign = flip;
        return cmd_check(checks, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return usage_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return usage_error;
    }
}

}  // namespace pulseforge::cli
