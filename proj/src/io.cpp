#include "hamflow/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace hamflow {

namespace {

std::vector<std::string> split(const std::string &line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

double parse_number(const std::string &text, const std::string &where)
{
  double v = 0;
  const char *first = text.data();
  const char *last = text.data() + text.size();
  if (!text.empty() && *first == '+') {
    ++first;
  }
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ParseError(where + ": '" + text + "' is not a number");
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path &path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  return out;
}

void write_text(const std::filesystem::path &path, const std::string &text)
{
  auto out = open_out(path);
  out << text;
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

std::string row(std::initializer_list<std::string> cells)
{
  std::string s;
  for (const auto &c : cells) {
    if (!s.empty()) {
      s += ',';
    }
    s += c;
  }
  return s + '\n';
}

std::string num(double v) { return format_number(v); }
std::string num(Index v) { return std::to_string(v); }

} // namespace

std::string format_number(double v)
{
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

DiscreteMeasure<double> read_measure_csv(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open measure file " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path.string() + ": empty file");
  }
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "w") {
    throw ParseError(path.string() + ":1: header must be w,x1,...,xD");
  }
  for (std::size_t d = 1; d < header.size(); ++d) {
    if (header[d] != "x" + std::to_string(d)) {
      throw ParseError(path.string() + ":1: expected column 'x" + std::to_string(d) + "', found '" + header[d] + "'");
    }
  }
  const Index dim = Index(header.size()) - 1;
  std::vector<double> weights;
  std::vector<double> coords;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto cells = split(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (Index(cells.size()) != dim + 1) {
      throw ParseError(where + ": expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(cells.size()));
    }
    weights.push_back(parse_number(cells[0], where));
    for (Index d = 0; d < dim; ++d) {
      coords.push_back(parse_number(cells[d + 1], where));
    }
  }
  if (weights.empty()) {
    throw ParseError(path.string() + ": no atoms");
  }
  const Index n = Index(weights.size());
  Matrix<double> pts = Eigen::Map<Matrix<double>>(coords.data(), dim, n);
  Vector<double> w = Eigen::Map<Vector<double>>(weights.data(), n);
  try {
    return DiscreteMeasure<double>(std::move(pts), std::move(w));
  } catch (const std::invalid_argument &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string measure_csv(const DiscreteMeasure<double> &mu)
{
  std::string s = "w";
  for (Index d = 0; d < mu.dim(); ++d) {
    s += ",x" + std::to_string(d + 1);
  }
  s += '\n';
  for (Index i = 0; i < mu.size(); ++i) {
    s += num(mu.weight(i));
    for (Index d = 0; d < mu.dim(); ++d) {
      s += ',' + num(mu.points()(d, i));
    }
    s += '\n';
  }
  return s;
}

void write_measure_csv(const std::filesystem::path &path, const DiscreteMeasure<double> &mu)
{
  write_text(path, measure_csv(mu));
}

void write_plan_csv(const std::filesystem::path &path, const TransportPlan<double> &plan)
{
  std::string s = "i,j,gamma\n";
  const auto &g = plan.coupling();
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) {
      if (g(i, j) > 0) {
        s += row({num(i), num(j), num(g(i, j))});
      }
    }
  }
  write_text(path, s);
}

void write_prox_bundle(const std::filesystem::path &dir, const ProxResult<double> &result)
{
  std::filesystem::create_directories(dir);
  write_measure_csv(dir / "nu.csv", result.nu);
  write_plan_csv(dir / "plan.csv", result.plan);

  const Index dim = result.input_mu.dim();
  std::string s = "field,index";
  for (Index d = 0; d < dim; ++d) {
    s += ",x" + std::to_string(d + 1);
  }
  for (Index d = 0; d < dim; ++d) {
    s += ",v" + std::to_string(d + 1);
  }
  s += '\n';
  auto emit = [&](const char *name, const VelocityField<double> &f) {
    for (Index i = 0; i < f.size(); ++i) {
      s += std::string(name) + ',' + num(i);
      for (Index d = 0; d < dim; ++d) {
        s += ',' + num(f.base().points()(d, i));
      }
      for (Index d = 0; d < dim; ++d) {
        s += ',' + num(f.vectors()(d, i));
      }
      s += '\n';
    }
  };
  emit("super", result.super_field);
  emit("sub", result.sub_field);
  write_text(dir / "fields.csv", s);

  write_text(dir / "report.csv", "tau,w2,envelope,iterations,converged\n" +
                                     row({num(result.tau), num(result.w2), num(result.envelope), num(result.iterations),
                                          result.converged ? "1" : "0"}));
}

void write_trajectory(const std::filesystem::path &dir, const Trajectory<double> &traj,
                      const std::vector<std::pair<std::string, std::string>> &meta)
{
  std::filesystem::create_directories(dir);
  std::string m = "key,value\n";
  for (const auto &[k, v] : meta) {
    m += k + ',' + v + '\n';
  }
  m += "grid_points," + num(traj.size()) + '\n';
  m += "truncated," + std::string(traj.truncated ? "1" : "0") + '\n';
  if (traj.truncated) {
    std::string e = traj.error;
    for (char &c : e) {
      if (c == ',' || c == '\n') {
        c = ';';
      }
    }
    m += "error," + e + '\n';
  }
  std::string idx = "index,time,file\n";
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    const std::string file = "t_" + std::to_string(s) + ".csv";
    write_measure_csv(dir / file, traj.snapshots[s]);
    idx += row({std::to_string(s), num(traj.snapshot_times[s]), file});
  }
  write_text(dir / "meta.csv", m);
  write_text(dir / "snapshots.csv", idx);

  std::string d = "time,step_w2,vel_norm,support_radius,envelope,prox_speed,prox_iterations\n";
  for (const auto &r : traj.diagnostics) {
    d += row({num(r.time), num(r.step_w2), num(r.velocity_norm), num(r.support_radius), num(r.envelope),
              num(r.prox_speed), num(r.prox_iterations)});
  }
  write_text(dir / "diagnostics.csv", d);
}

void write_study(const std::filesystem::path &dir, const StudyReport<double> &report)
{
  std::filesystem::create_directories(dir);
  std::string c = "time,tau_coarse,tau_fine,w2\n";
  for (const auto &r : report.cauchy) {
    c += row({num(r.time), num(r.tau_coarse), num(r.tau_fine), num(r.w2)});
  }
  write_text(dir / "cauchy.csv", c);

  std::string s = "time,tau,min_ratio,min_residual,max_distance\n";
  for (const auto &r : report.subdiff) {
    s += row({num(r.time), num(r.tau), num(r.min_ratio), num(r.min_residual), num(r.max_distance)});
  }
  write_text(dir / "subdiff.csv", s);

  std::string g = "time,tau,gap,bound,speed,holds\n";
  for (const auto &r : report.gaps) {
    g += row({num(r.time), num(r.tau), num(r.gap), num(r.bound), num(r.speed), r.holds ? "1" : "0"});
  }
  write_text(dir / "gaps.csv", g);

  std::string o = "tau,time,error\n";
  for (const auto &r : report.ode) {
    o += row({num(r.tau), num(r.time), num(r.error)});
  }
  write_text(dir / "ode_error.csv", o);
}

} // namespace hamflow
