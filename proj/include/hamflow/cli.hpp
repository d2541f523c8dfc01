#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hamflow {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verify_failed = 1;
inline constexpr int usage = 2;
inline constexpr int solver = 3;
inline constexpr int prox_not_converged = 4;
inline constexpr int truncated = 5;
} // namespace exit_code

/// Runs the command line `args` (without the program name); returns the process exit code.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

struct VerifyCheck
{
  std::string name;
  bool passed;
  double value;     // the measured worst case
  double threshold; // the bound it is compared against
};

struct ExperimentConfig;

std::vector<std::string> verify_suites();

/**
 * Checks of one suite ("all" runs every built-in suite); nullopt for an unknown suite name. The `experiment`
 * suite checks the prox and flow invariants on the configured measure and Hamiltonian and needs `cfg`.
 */
std::optional<std::vector<VerifyCheck>> run_verify_suite(const std::string &suite, std::uint64_t seed,
                                                         const ExperimentConfig *cfg = nullptr);

} // namespace hamflow
