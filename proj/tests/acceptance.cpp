// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//   acceptance <configs dir> [work dir]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "oracles.hpp"
#include "pulseforge/baselines.hpp"
#include "pulseforge/checks.hpp"
#include "pulseforge/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pulseforge;

namespace {

// J_max first reached by configs/reqc_robust.yaml; later runs may not regress past it.
constexpr double kLockedJmax = 1.0e-4;

struct Verdict {
    bool passed = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = elapsed <= budget_s;
    const bool ok = v.passed && in_time;
    if (!ok) ++failures;
    char timing[96];
    std::snprintf(timing, sizeof timing, "%.1f s of %.0f s", elapsed, budget_s);
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << "): " << v.detail << "; "
              << timing << (in_time ? "" : " [over budget]") << std::endl;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << v;
    return s.str();
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pulseforge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("missing " + p.string());
    return json::parse(f);
}

// 1 - T^2 and F on the qubit block, recomputed from the final operator.
struct PointCheck {
    double j = 0.0;
    double f = 0.0;        // library worst-case fidelity
    double f_oracle = 0.0; // elliptical numerical range
};

PointCheck check_point(const HamiltonianModel& model, const SystemParameters& xi, const TargetGate& target,
                       const ControlWaveform& w) {
    const CMatrix u = propagate_forward(model, xi, w).final_operator();
    const CMatrix o = qubit_restriction(target, u, model.qubit_indices()).matrix;
    const double t = std::abs(o.trace()) / 2.0;
    return {1.0 - t * t, worst_case_fidelity(o), oracle::ellipse_worst_case(Eigen::MatrixXcd(o))};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <configs dir> [work dir]\n";
        return 1;
    }
    const fs::path configs = argv[1];
    const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "pulseforge_acceptance";
    fs::create_directories(work);

    report(1, "gradient exactness", 30, [] {
        CheckOptions o;
        o.gradient_cases = 20;
        const auto r = check_gradient(o);
        return Verdict{r.passed, "20 problems, max relative error " + fmt(r.max_error) + " (limit 1e-6)"};
    });

    report(2, "fidelity bound", 120, [] {
        CheckOptions o;
        o.bound_samples = 10000;
        const auto r = check_fidelity_bound(o);
        // Cross-validate the worst-case search on 100 n = 2 restrictions.
        std::mt19937_64 rng(0xACCE55);
        double oracle_err = 0.0;
        for (int k = 0; k < 100; ++k) {
            const oracle::Mat m = oracle::haar_unitary(rng, 3).topLeftCorner(2, 2);
            oracle_err = std::max(oracle_err, std::abs(worst_case_fidelity(CMatrix(m)) - oracle::grid_worst_case(m, 600)));
        }
        return Verdict{r.passed && oracle_err <= 1e-6,
                       "3x10^4 restrictions + equality family, worst violation " + fmt(r.max_error) +
                           " (limit 1e-9); grid oracle max deviation " + fmt(oracle_err) + " (limit 1e-6)"};
    });

    report(3, "boundary equivalence", 30, [] {
        CheckOptions o;
        o.boundary_cases = 20;
        const auto r = check_boundary_equivalence(o);
        return Verdict{r.passed, "20 problems, max relative gradient difference / column growth " + fmt(r.max_error) +
                                     " (limit 1e-9)"};
    });

    report(4, "ideal-point solvability", 60, [&] {
        const fs::path out = work / "ideal_point";
        const int code = run_cli({"--quiet", "optimize", (configs / "ideal_point.yaml").string(), "--output", out.string()});
        const auto cfg = cli::load_config((configs / "ideal_point.yaml").string());
        const auto p = cli::read_result_coefficients((out / "result.json").string());
        const auto w = synthesize(p, TimeGrid(cfg.duration, read_json(out / "result.json")["verification"]["n_steps"].get<int>()));
        const auto c = check_point(ReqcModel(), {1.0, 0.0}, phase_gate_target(), w);
        return Verdict{code == cli::ok && c.j <= 1e-8,
                       "exit " + std::to_string(code) + ", recomputed J = " + fmt(c.j) + " (limit 1e-8)"};
    });

    // Criteria 5-7 share the robust run.
    const fs::path robust_out = work / "reqc_robust";
    const auto robust_cfg = cli::load_config((configs / "reqc_robust.yaml").string());
    int robust_code = -1;
    json robust;
    ControlWaveform robust_waveform;
    FourierParametrization robust_params;
    int verified_steps = 0;

    report(5, "robust pulse on the 49-point grid", 15 * 60, [&] {
        robust_code = run_cli({"--quiet", "optimize", (configs / "reqc_robust.yaml").string(), "--output", robust_out.string()});
        if (robust_code != cli::ok && robust_code != cli::not_converged) {
            return Verdict{false, "optimize exited with " + std::to_string(robust_code)};
        }
        robust = read_json(robust_out / "result.json");
        robust_params = cli::read_result_coefficients((robust_out / "result.json").string());
        verified_steps = robust["verification"]["n_steps"].get<int>();
        robust_waveform = synthesize(robust_params, TimeGrid(robust_cfg.duration, verified_steps, robust_cfg.integrator));
        const ReqcModel model;
        const TargetMap targets = reqc_target_map(robust_cfg.far_detuning);
        double gate_err = 0.0, far_err = 0.0, disagreement = 0.0;
        for (const auto& xi : robust_cfg.grid.points) {
            const auto c = check_point(model, xi, targets(xi), robust_waveform);
            disagreement = std::max(disagreement, std::abs(c.f - c.f_oracle));
            double& worst = std::abs(xi.delta) >= robust_cfg.far_detuning ? far_err : gate_err;
            worst = std::max(worst, 1.0 - std::min(c.f, c.f_oracle));
        }
        const bool k_ok = robust_params.n_harmonics == 24 && robust_cfg.grid.size() == 49;
        return Verdict{k_ok && gate_err <= 1e-3 && far_err <= 1e-3 && disagreement <= 1e-9,
                       "K = " + std::to_string(robust_params.n_harmonics) + ", N = " + std::to_string(verified_steps) +
                           ", max 1-F gate points " + fmt(gate_err) + ", far points " + fmt(far_err) +
                           " (limit 1e-3); F vs ellipse oracle " + fmt(disagreement) + ", exit " +
                           std::to_string(robust_code) + " (" + robust.value("termination", "?") + ")"};
    });

    report(6, "improvement over the naive pulse", 60, [&] {
        if (robust.is_null()) return Verdict{false, "no robust result"};
        const ReqcModel model;
        const TargetMap targets = reqc_target_map(robust_cfg.far_detuning);
        const auto naive = naive_2pi_pulse(robust_cfg.duration, verified_steps, robust_cfg.integrator);
        double naive_j = 0.0, robust_j = 0.0;
        for (const auto& xi : robust_cfg.grid.points) {
            naive_j = std::max(naive_j, check_point(model, xi, targets(xi), naive).j);
            robust_j = std::max(robust_j, check_point(model, xi, targets(xi), robust_waveform).j);
        }
        const double ratio = naive_j / robust_j;
        const bool locked = kLockedJmax <= 0.0 || robust_j <= kLockedJmax;
        return Verdict{ratio >= 100.0 && locked,
                       "naive J_max " + fmt(naive_j) + ", optimized " + fmt(robust_j) + ", ratio " + fmt(ratio) +
                           " (limit 100); locked J_max " + (kLockedJmax > 0.0 ? fmt(kLockedJmax) : "unset")};
    });

    report(7, "integrator sanity", 60, [&] {
        if (robust.is_null()) return Verdict{false, "no robust result"};
        const ReqcModel model;
        auto make = [&](const TimeGrid& g) { return synthesize(robust_params, g); };
        const TimeGrid grid(robust_cfg.duration, verified_steps, robust_cfg.integrator);
        const auto& pts = robust_cfg.grid.points;
        std::vector<double> sd(pts.size()), drift(pts.size());
        parallel_for(pts.size(), resolve_threads(0), [&](std::size_t i) {
            sd[i] = step_doubling_error(model, pts[i], make, grid);
            drift[i] = unitarity_defect(propagate_forward(model, pts[i], robust_waveform));
        });
        const double sd_max = *std::max_element(sd.begin(), sd.end());
        const double drift_max = *std::max_element(drift.begin(), drift.end());
        return Verdict{sd_max <= 1e-8 && drift_max <= 1e-10,
                       "N = " + std::to_string(verified_steps) + ", step doubling " + fmt(sd_max) +
                           " (limit 1e-8), unitarity drift " + fmt(drift_max) + " (limit 1e-10)"};
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
