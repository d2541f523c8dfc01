#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hamflow/flow.hpp"
#include "hamflow/io.hpp"

namespace hamflow {

/// Inline atoms, a CSV file, or `random` atoms drawn from the experiment seed.
struct MeasureSpec
{
  std::optional<Matrix<double>> points; // D x n
  std::optional<Vector<double>> weights;
  std::optional<std::filesystem::path> csv;
  Index random = 0;
  Index dim = 2;
  double scale = 1.0;
  bool equal_weights = false;
};

struct HamiltonianSpec
{
  std::string kind = "zero"; // zero | potential | interaction | example
  double a = 0.0;
  std::optional<double> lambda_V;
  std::string potential = "quadratic"; // quadratic | double_well | linear | zero
  std::optional<Vector<double>> potential_center;
  std::string interaction = "zero"; // quadratic | zero
  std::optional<MeasureSpec> reference;

  /// Declared convexity modulus of the selected H, when known.
  std::optional<double> convexity_modulus() const;
};

struct FlowSpec
{
  double tau = 0.1;
  double T = 1.0;
  Index N = 100;
  std::vector<double> snapshots;
  std::optional<Matrix<double>> structure; // canonical when absent
  std::optional<double> C_o;
  std::optional<double> k_hat;
};

struct ProxSpec
{
  double tol = 1e-10;
  double grad_tol = 1e-8;
  Index max_iter = 500;
  Index restarts = 0;
};

struct StudySpec
{
  std::vector<double> taus;
  Index threads = 1;
  double probe_radius = 1e-3;
  Index probe_count = 8;
};

struct ExperimentConfig
{
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
  std::optional<MeasureSpec> measure;
  HamiltonianSpec hamiltonian;
  FlowSpec flow;
  ProxSpec prox;
  StudySpec study;
};

/// Parses TOML text; relative CSV paths resolve against `base_dir`. Throws ParseError naming the offending key.
ExperimentConfig parse_config(const std::string &text, const std::filesystem::path &base_dir = ".",
                              const std::string &source = "config");
ExperimentConfig load_config(const std::filesystem::path &path);

struct Experiment
{
  DiscreteMeasure<double> mu_bar;
  HamiltonianOracle<double> hamiltonian;
  FlowConfig<double> flow;
};

DiscreteMeasure<double> build_measure(const MeasureSpec &spec, std::uint64_t seed, std::uint64_t stream);

/// Materializes measure, Hamiltonian and flow configuration. Throws ParseError on inconsistent sections.
/// With `with_structure` false the symplectic structure is left at its default and not checked (prox only).
Experiment build_experiment(const ExperimentConfig &cfg, bool with_structure = true);

/// key,value pairs echoing the configuration (written to meta.csv).
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig &cfg);

} // namespace hamflow
