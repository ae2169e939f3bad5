#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pulseforge {

struct CheckOptions {
    std::uint64_t seed = 0x5EED;
    int gradient_cases = 20;
    int unitarity_cases = 20;
    int bound_samples = 10000;  ///< per restriction size n = 2, 3, 4
    int boundary_cases = 20;
    /// Mutation hook: negates the adjoint gradient before it is compared.
    bool flip_gradient_sign = false;
};

struct SuiteResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = true;
    /// Inputs of the worst failing case, enough to replay it.
    std::map<std::string, std::vector<double>> failing_case;
};

/// Adjoint gradient against central differences (step 1e-5) on random
/// three-level problems with 64 steps and at most 8 harmonics.
SuiteResult check_gradient(const CheckOptions& options);

/// U^dagger U = I along random Hermitian evolutions; singular values <= 1
/// with a loss term.
SuiteResult check_unitarity(const CheckOptions& options);

/// 1 - F <= n (1 - T) on random restrictions of unitaries, and equality on
/// the rank-one family I - (1 - F0)|psi><psi|.
SuiteResult check_fidelity_bound(const CheckOptions& options);

/// Standard and norm-minimizing adjoint boundaries give the same gradient and
/// the latter never lengthens a column.
SuiteResult check_boundary_equivalence(const CheckOptions& options);

std::vector<SuiteResult> run_checks(const CheckOptions& options);

}  // namespace pulseforge
