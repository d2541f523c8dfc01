#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hamflow/flow.hpp"
#include "hamflow/moreau_yosida.hpp"
#include "hamflow/study.hpp"

namespace hamflow {

/// Malformed input file or configuration; the message names the file/line or key.
class ParseError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// Measure CSV: header `w,x1,...,xD`, one atom per row.
DiscreteMeasure<double> read_measure_csv(const std::filesystem::path &path);
void write_measure_csv(const std::filesystem::path &path, const DiscreteMeasure<double> &mu);
std::string measure_csv(const DiscreteMeasure<double> &mu);

/// Sparse plan CSV: `i,j,gamma` for every positive entry, row-major.
void write_plan_csv(const std::filesystem::path &path, const TransportPlan<double> &plan);

/// nu.csv, plan.csv, fields.csv, report.csv.
void write_prox_bundle(const std::filesystem::path &dir, const ProxResult<double> &result);

/// meta.csv (key,value echo), t_<index>.csv per snapshot, diagnostics.csv.
void write_trajectory(const std::filesystem::path &dir, const Trajectory<double> &traj,
                      const std::vector<std::pair<std::string, std::string>> &meta);

/// cauchy.csv, subdiff.csv, gaps.csv, ode_error.csv.
void write_study(const std::filesystem::path &dir, const StudyReport<double> &report);

} // namespace hamflow
