#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pulseforge/baselines.hpp"
#include "pulseforge/minimax.hpp"

namespace pulseforge::cli {

enum ExitCode : int { ok = 0, usage_error = 1, not_converged = 2, check_failed = 3 };

/// Malformed configuration; the message names the source line and field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AxisSpec {
    double lo = 0.0;
    double hi = 0.0;
    int resolution = 1;
};

struct RunConfig {
    std::string model = "reqc";  ///< reqc | stub
    double decay_rate = 0.0;
    std::string target = "phase_gate";  ///< phase_gate | identity
    double far_detuning = 5.0;

    std::string grid_name = "default_reqc_49";
    ParameterGrid grid = default_reqc_grid();

    int harmonics = 24;
    double duration = 24.0 * 3.14159265358979323846;
    double amplitude_bound = 1.0;
    int n_steps = 2048;
    Integrator integrator = Integrator::magnus4;
    std::string initial = "naive";  ///< naive | resonant | path to a result.json
    double perturbation = 1e-3;

    OptimizerOptions optimizer;
    std::uint64_t seed = 0x5EED;
    BoundaryKind boundary = BoundaryKind::standard;
    PenaltySpec penalty;

    double step_doubling_tolerance = 1e-8;
    int max_verify_steps = 32768;

    AxisSpec gamma_axis{0.8, 1.2, 21};
    AxisSpec delta_axis{-3.0, 3.0, 61};
    std::vector<SechPulseSpec> sech;  ///< empty means the default sequence

    std::string output = "out";
};

/// Parses YAML (JSON is accepted as a subset). `source` prefixes diagnostics.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

std::unique_ptr<HamiltonianModel> make_model(const RunConfig& config);
TargetMap make_target_map(const RunConfig& config);

/// Coefficients stored under "coefficients" in a result.json.
FourierParametrization read_result_coefficients(const std::string& path);

/// Entry point; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pulseforge::cli
