#include "hamflow/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include <CLI11.hpp>

#include "hamflow/config.hpp"
#include "hamflow/hamflow.hpp"
#include "hamflow/io.hpp"

namespace hamflow {

namespace {

struct GlobalOptions
{
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<Index> threads;
};

int fail(std::ostream &err, int code, const std::string &msg)
{
  err << "hamflow: " << msg << '\n';
  return code;
}

ExperimentConfig load(const GlobalOptions &g)
{
  if (g.config.empty()) {
    throw ParseError("--config is required");
  }
  auto cfg = load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
  }
  return cfg;
}

std::filesystem::path out_dir(const GlobalOptions &g, const ExperimentConfig &cfg)
{
  if (!g.out.empty()) {
    return g.out;
  }
  return cfg.out ? *cfg.out : std::filesystem::path("hamflow_out");
}

// Maps library exceptions onto exit codes; `body` returns the code on success paths.
template <typename Fn> int guarded(std::ostream &err, Fn body)
{
  try {
    return body();
  } catch (const ParseError &e) {
    return fail(err, exit_code::usage, e.what());
  } catch (const ProxGuardError &e) {
    return fail(err, exit_code::usage, e.what());
  } catch (const DimensionMismatch &e) {
    return fail(err, exit_code::usage, e.what());
  } catch (const SolverError &e) {
    return fail(err, exit_code::solver, e.what());
  } catch (const EvaluationError &e) {
    return fail(err, exit_code::solver, e.what());
  } catch (const std::invalid_argument &e) {
    return fail(err, exit_code::usage, e.what());
  } catch (const std::exception &e) {
    return fail(err, exit_code::solver, e.what());
  }
}

int cmd_w2(const std::string &a, const std::string &b, const std::string &plan_path, std::ostream &out, std::ostream &err)
{
  return guarded(err, [&] {
    const auto mu = read_measure_csv(a);
    const auto nu = read_measure_csv(b);
    if (mu.dim() != nu.dim()) {
      throw ParseError("measures have dimensions " + std::to_string(mu.dim()) + " and " + std::to_string(nu.dim()));
    }
    const auto ot = solve_w2(mu, nu);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12f", ot.distance);
    out << buf << '\n';
    if (!plan_path.empty()) {
      write_plan_csv(plan_path, ot.plan);
    }
    return exit_code::ok;
  });
}

int cmd_prox(const GlobalOptions &g, std::ostream &out, std::ostream &err)
{
  return guarded(err, [&] {
    const auto cfg = load(g);
    const auto ex = build_experiment(cfg, false);
    const auto result = prox(ex.hamiltonian, ex.mu_bar, ex.flow.tau, ex.flow.prox);
    const auto dir = out_dir(g, cfg);
    write_prox_bundle(dir, result);
    out << "envelope " << format_number(result.envelope) << " w2 " << format_number(result.w2) << " iterations "
        << result.iterations << '\n';
    if (!result.converged) {
      return fail(err, exit_code::prox_not_converged,
                  "prox did not converge in " + std::to_string(result.iterations) + " iterations (gradient norm " +
                    format_number(result.gradient_norm) + ")");
    }
    return exit_code::ok;
  });
}

int cmd_flow(const GlobalOptions &g, std::ostream &out, std::ostream &err)
{
  return guarded(err, [&] {
    const auto cfg = load(g);
    const auto ex = build_experiment(cfg);
    const auto traj = run_flow(ex.hamiltonian, ex.mu_bar, ex.flow);

    auto meta = config_echo(cfg);
    const double k_hat = ex.flow.k_hat ? *ex.flow.k_hat : empirical_support_growth(traj);
    const auto sup = support_report(traj, support_radius(ex.mu_bar), k_hat, traj.tau, traj.h);
    meta.emplace_back("k_hat", format_number(k_hat));
    meta.emplace_back("support_breaches", std::to_string(sup.breaches));
    if (traj.size() >= 2) {
      const auto lip = lipschitz_report(traj);
      meta.emplace_back("lipschitz", format_number(lip.lipschitz));
      meta.emplace_back("max_velocity_norm", format_number(lip.max_velocity_norm));
    }
    const auto dir = out_dir(g, cfg);
    write_trajectory(dir, traj, meta);
    out << "grid points " << traj.size() << " snapshots " << traj.snapshots.size() << '\n';
    if (traj.truncated) {
      return fail(err, exit_code::truncated, "run truncated: " + traj.error);
    }
    if (sup.breaches > 0) {
      return fail(err, exit_code::truncated, std::to_string(sup.breaches) + " support bound breaches");
    }
    return exit_code::ok;
  });
}

int cmd_study(const GlobalOptions &g, std::ostream &out, std::ostream &err)
{
  return guarded(err, [&] {
    const auto cfg = load(g);
    if (cfg.study.taus.empty()) {
      throw ParseError("'study.taus' is required for the study command");
    }
    const auto ex = build_experiment(cfg);
    StudyOptions<double> opts;
    opts.taus = cfg.study.taus;
    opts.flow = ex.flow;
    opts.threads = g.threads ? *g.threads : cfg.study.threads;
    opts.probe_radius = cfg.study.probe_radius;
    opts.probe_count = cfg.study.probe_count;
    opts.seed = cfg.seed;
    const auto report = tau_study(ex.hamiltonian, ex.mu_bar, opts);
    write_study(out_dir(g, cfg), report);
    out << "runs " << report.runs.size() << " cauchy rows " << report.cauchy.size() << '\n';
    if (!report.ok()) {
      for (const auto &v : report.violations) {
        err << "violation: " << v << '\n';
      }
      return exit_code::truncated;
    }
    return exit_code::ok;
  });
}

int cmd_verify(const std::string &suite, const GlobalOptions &g, std::ostream &out, std::ostream &err)
{
  return guarded(err, [&] {
    std::optional<ExperimentConfig> cfg;
    if (!g.config.empty()) {
      cfg = load(g);
    }
    const std::uint64_t seed = g.seed ? *g.seed : cfg ? cfg->seed : 0;
    const auto checks = run_verify_suite(suite, seed, cfg ? &*cfg : nullptr);
    if (!checks) {
      std::string names;
      for (const auto &s : verify_suites()) {
        names += " " + s;
      }
      return fail(err, exit_code::usage, "unknown suite '" + suite + "' (available:" + names + ")");
    }
    bool all = true;
    std::size_t width = 5;
    for (const auto &c : *checks) {
      width = std::max(width, c.name.size());
    }
    for (const auto &c : *checks) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-4s  %-*s  %.3e  (limit %.3e)\n", c.passed ? "PASS" : "FAIL", int(width),
                    c.name.c_str(), c.value, c.threshold);
      out << buf;
      all = all && c.passed;
    }
    return all ? exit_code::ok : exit_code::verify_failed;
  });
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Hamiltonian flows on discrete probability measures"};
  app.name("hamflow");
  app.require_subcommand(1);

  GlobalOptions g;
  std::uint64_t seed = 0;
  Index threads = 1;
  app.add_option("--config", g.config, "TOML experiment file");
  app.add_option("--out", g.out, "output directory");
  auto *seed_opt = app.add_option("--seed", seed, "64-bit seed");
  auto *threads_opt = app.add_option("--threads", threads, "worker threads for independent runs")->check(CLI::PositiveNumber);

  std::string a, b, plan;
  auto *w2 = app.add_subcommand("w2", "W2 distance between two measure CSV files");
  w2->add_option("mu", a, "first measure")->required();
  w2->add_option("nu", b, "second measure")->required();
  w2->add_option("--plan", plan, "write the optimal plan to this CSV");
  auto *px = app.add_subcommand("prox", "proximal step; writes nu.csv, plan.csv, fields.csv, report.csv");
  auto *fl = app.add_subcommand("flow", "discrete Hamiltonian flow; writes a trajectory directory");
  auto *st = app.add_subcommand("study", "tau refinement study; writes cauchy/subdiff/gaps/ode_error CSVs");
  std::string suite;
  auto *vf = app.add_subcommand("verify", "invariant suites");
  vf->add_option("suite", suite, "metric, barycentric, envelope, concavity, subdifferential, flow, experiment or all")->required();
  for (auto *s : {w2, px, fl, st, vf}) {
    s->fallthrough();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::ParseError &e) {
    err << "hamflow: " << e.what() << '\n';
    return exit_code::usage;
  }
  if (seed_opt->count() > 0) {
    g.seed = seed;
  }
  if (threads_opt->count() > 0) {
    g.threads = threads;
  }

  if (w2->parsed()) {
    return cmd_w2(a, b, plan, out, err);
  }
  if (px->parsed()) {
    return cmd_prox(g, out, err);
  }
  if (fl->parsed()) {
    return cmd_flow(g, out, err);
  }
  if (st->parsed()) {
    return cmd_study(g, out, err);
  }
  return cmd_verify(suite, g, out, err);
}

} // namespace hamflow
