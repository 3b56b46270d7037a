#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mdmm/harness.hpp"
#include "mdmm/multiplier.hpp"
#include "mdmm/records.hpp"

namespace fs = std::filesystem;
using namespace mdmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitPipelineFailure = 3;

void emit_error(const std::string& message) {
  std::cerr << "{\"error\":\"" << message << "\"}\n";
}

// Created if absent, refused if non-empty without --force.
void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path is not a directory: " + dir.string());
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory not empty (use --force): " + dir.string());
    }
  } else {
    fs::create_directories(dir);
  }
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool force = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "master seed")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--jobs", opts.jobs, "parallel sweep workers")->check(CLI::PositiveNumber);
  cmd->add_flag("--force", opts.force, "allow writing into a non-empty output directory");
  cmd->add_option("--set", opts.overrides, "config override key=value (dotted keys)");
}

ExperimentConfig load_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = config_from_json_text(read_file(opts.config_path));
  }
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed_set) cfg.seed = opts.seed;
  cfg.validate();
  return cfg;
}

std::string solve_trace_csv(const SolveTrace& trace) {
  std::ostringstream out;
  out << "# schema " << kSchemaVersion << "\n";
  out << "step,objective,residual,lambda,lagrangian,theta_norm\n";
  for (const auto& s : trace.steps) {
    out << s.step << ',' << format_double(s.objective) << ',' << format_double(s.residual) << ','
        << format_double(s.lambda) << ',' << format_double(s.lagrangian) << ','
        << format_double(s.theta_norm) << "\n";
  }
  return out.str();
}

void persist_record(const fs::path& dir, const RunRecord& record) {
  write_run_record(dir, record);
  write_trace_csv(dir, record);
}

void write_manifest(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "MANIFEST") continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  std::ostringstream out;
  for (const auto& name : names) {
    const std::string content = read_file(dir / name);
    out << name << "\tok\t" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(content)
        << std::dec << "\n";
  }
  atomic_write_file(dir / "MANIFEST", out.str());
}

int cmd_solve(const CommonOpts& opts, const std::string& problem_name, const std::string& method,
              double damping, double lr_theta, double lr_lambda, std::int64_t steps, double tol,
              double epsilon) {
  DifferentiableProblem problem;
  Vector theta0;
  if (problem_name == "quadratic") {
    Vector a(2), b(2);
    a << 1, 1;
    b << 1, 0;
    problem = make_quadratic_problem(a, b, 0.0);
    theta0 = Vector::Zero(2);
  } else if (problem_name == "sphere") {
    problem = make_sphere_problem();
    theta0 = Vector(2);
    theta0 << -0.5, 0.1;
  } else if (problem_name == "target-only") {
    problem = make_target_only_problem(epsilon);
    theta0 = Vector::Zero(1);
  } else {
    emit_error("unknown problem name: " + problem_name);
    return kExitUsage;
  }

  SolveConfig config;
  config.theta_step = lr_theta;
  config.max_steps = steps;
  config.residual_tol = tol;
  if (method == "mdmm") {
    config.method = SolveMethod::MDMM;
  } else if (method == "bdmm") {
    config.method = SolveMethod::BDMM;
  } else if (method == "penalty") {
    config.method = SolveMethod::Penalty;
  } else {
    emit_error("unknown method: " + method);
    return kExitUsage;
  }

  ConstraintState constraint;
  constraint.epsilon = epsilon;
  constraint.damping = damping;
  constraint.lambda_step = lr_lambda;

  prepare_out_dir(opts.out_dir, opts.force);
  const SolveTrace trace = solve_constrained(problem, constraint, config, theta0);
  atomic_write_file(fs::path(opts.out_dir) / ("solve_" + problem_name + "_trace.csv"),
                    solve_trace_csv(trace));

  std::cout << "problem=" << problem_name << " method=" << method
            << " termination=" << to_string(trace.termination)
            << " steps=" << trace.steps.size() << " lambda=" << format_double(trace.lambda_final)
            << "\n";
  if (trace.termination == Termination::Converged) return kExitOk;
  emit_error("solve did not converge: " + std::string(to_string(trace.termination)) +
             (trace.diagnostic.empty() ? "" : " (" + trace.diagnostic + ")"));
  return kExitDiverged;
}

int cmd_preliminary(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts);
  prepare_out_dir(opts.out_dir, opts.force);
  const PreliminaryResult result = run_preliminary(cfg);
  persist_record(opts.out_dir, result.record);
  write_manifest(opts.out_dir);
  std::cout << "epsilon_star=" << format_double(result.epsilon_star)
            << " status=" << result.record.status << "\n";
  return result.record.status == "Diverged" ? kExitDiverged : kExitOk;
}

int cmd_train(const CommonOpts& opts, double epsilon) {
  ExperimentConfig cfg = load_config(opts);
  if (epsilon == 0.0 && cfg.epsilon > 0) epsilon = cfg.epsilon;
  if (epsilon <= 0) {
    emit_error("train requires --epsilon > 0");
    return kExitUsage;
  }
  prepare_out_dir(opts.out_dir, opts.force);
  const RunRecord record = run_constrained(cfg, epsilon, "constrained");
  persist_record(opts.out_dir, record);
  write_manifest(opts.out_dir);
  std::cout << "l_recon_ema=" << format_double(record.final.l_recon_ema)
            << " l_kl=" << format_double(record.final.l_kl)
            << " quality=" << format_double(record.final.generation_quality)
            << " status=" << record.status << "\n";
  return record.status == "Diverged" ? kExitDiverged : kExitOk;
}

int persist_sweep(const fs::path& dir, const SweepResult& sweep, const std::string& name) {
  for (const auto& entry : sweep.entries) persist_record(dir, entry.record);
  atomic_write_file(dir / (name + "_summary.csv"), sweep_summary_csv(sweep));
  write_manifest(dir);
  if (sweep.argmin_index >= 0) {
    std::cout << name << " argmin grid_value="
              << format_double(sweep.entries[static_cast<std::size_t>(sweep.argmin_index)].grid_value)
              << " quality="
              << format_double(sweep.argmin()->final.generation_quality)
              << (sweep.partial ? " (partial sweep)" : "") << "\n";
  }
  return sweep.partial ? kExitDiverged : kExitOk;
}

int cmd_sweep_alpha(const CommonOpts& opts, const std::vector<double>& grid_flag) {
  ExperimentConfig cfg = load_config(opts);
  const std::vector<double>& grid = grid_flag.empty() ? cfg.alpha_grid : grid_flag;
  prepare_out_dir(opts.out_dir, opts.force);
  const SweepResult sweep = sweep_alpha(cfg, grid, opts.jobs);
  return persist_sweep(opts.out_dir, sweep, "sweep_alpha");
}

int cmd_sweep_epsilon(const CommonOpts& opts, double center) {
  ExperimentConfig cfg = load_config(opts);
  if (center == 0.0 && cfg.epsilon > 0) center = cfg.epsilon;
  if (center <= 0) {
    emit_error("sweep-epsilon requires --epsilon > 0 (the sweep center)");
    return kExitUsage;
  }
  prepare_out_dir(opts.out_dir, opts.force);
  const SweepResult sweep = sweep_epsilon(cfg, center, cfg.epsilon_delta_rel * center, opts.jobs);
  return persist_sweep(opts.out_dir, sweep, "sweep_epsilon");
}

std::string pipeline_summary_csv(const FrameworkReport& report) {
  std::ostringstream out;
  out << "# schema " << kSchemaVersion << "\n";
  out << "run,mode,grid_value,final_l_recon,final_l_kl,generation_quality,status\n";
  auto row = [&out](const std::string& name, const std::string& mode, const std::string& grid,
                    const RunRecord& r) {
    out << name << ',' << mode << ',' << grid << ',' << format_double(r.final.l_recon_ema) << ','
        << format_double(r.final.l_kl) << ',' << format_double(r.final.generation_quality) << ','
        << r.status << "\n";
  };
  row(report.preliminary.record.label, "preliminary", "", report.preliminary.record);
  row(report.constrained.label, "constrained", format_double(report.constrained.config.epsilon),
      report.constrained);
  for (const auto& entry : report.alpha_sweep.entries) {
    row(entry.record.label, "weighted", format_double(entry.grid_value), entry.record);
  }
  return out.str();
}

int cmd_pipeline(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts);
  prepare_out_dir(opts.out_dir, opts.force);
  const FrameworkReport report = compare_framework(cfg, opts.jobs);

  const fs::path dir(opts.out_dir);
  persist_record(dir, report.preliminary.record);
  persist_record(dir, report.constrained);
  for (const auto& entry : report.alpha_sweep.entries) persist_record(dir, entry.record);
  atomic_write_file(dir / "sweep_alpha_summary.csv", sweep_summary_csv(report.alpha_sweep));
  atomic_write_file(dir / "summary.csv", pipeline_summary_csv(report));
  atomic_write_file(dir / "report.txt", report.render_text());
  write_manifest(dir);

  std::cout << report.render_text();
  bool any_diverged = report.preliminary.record.status == "Diverged" ||
                      report.constrained.status == "Diverged" || report.alpha_sweep.partial;
  return any_diverged ? kExitPipelineFailure : kExitOk;
}

int cmd_report(const std::string& dir_arg) {
  const fs::path dir(dir_arg);
  if (!fs::is_directory(dir)) {
    emit_error("not a directory: " + dir.string());
    return kExitUsage;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    emit_error("no run records found in " + dir.string());
    return kExitUsage;
  }
  std::vector<RunRecord> records;
  for (const auto& file : files) {
    try {
      records.push_back(run_record_from_json_text(read_file(file)));
    } catch (const std::exception& e) {
      emit_error("corrupt run record " + file.filename().string() + ": " + e.what());
      return kExitUsage;
    }
  }
  std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    return a.final.generation_quality < b.final.generation_quality;
  });
  std::cout << std::left << std::setw(26) << "run" << std::setw(13) << "mode" << std::setw(13)
            << "l_recon" << std::setw(13) << "l_kl" << std::setw(13) << "quality" << "status\n";
  for (const auto& r : records) {
    std::cout << std::left << std::setw(26) << r.label << std::setw(13) << to_string(r.config.mode)
              << std::setw(13) << format_double(r.final.l_recon_ema) << std::setw(13)
              << format_double(r.final.l_kl) << std::setw(13)
              << format_double(r.final.generation_quality) << r.status << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained-optimization lab: multiplier-method training and trade-off sweeps"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* solve = app.add_subcommand("solve", "run a benchmark constrained solve");
  std::string problem = "quadratic";
  std::string method = "mdmm";
  double damping = 1.0, lr_theta = 1e-2, lr_lambda = 1e-2, tol = 1e-6, solve_epsilon = 0.25;
  std::int64_t solve_steps = 1'000'000;
  solve->add_option("problem", problem, "quadratic | sphere | target-only");
  solve->add_option("--method", method, "mdmm | bdmm | penalty");
  solve->add_option("--c", damping, "damping constant");
  solve->add_option("--lr-theta", lr_theta, "descent rate on theta");
  solve->add_option("--lr-lambda", lr_lambda, "ascent rate on lambda");
  solve->add_option("--steps", solve_steps, "max steps");
  solve->add_option("--tol", tol, "residual tolerance");
  solve->add_option("--epsilon", solve_epsilon, "target for the target-only problem");
  add_common(solve, opts);

  auto* preliminary = app.add_subcommand("preliminary", "measure epsilon* on the autoencoder task");
  add_common(preliminary, opts);

  auto* train = app.add_subcommand("train", "constrained main training at a given epsilon");
  double train_epsilon = 0.0;
  train->add_option("--epsilon", train_epsilon, "reconstruction target");
  add_common(train, opts);

  auto* sweep_a = app.add_subcommand("sweep-alpha", "baseline sweep over the balance weight");
  std::vector<double> alpha_grid_flag;
  sweep_a->add_option("--alpha-grid", alpha_grid_flag, "grid values (ascending)");
  add_common(sweep_a, opts);

  auto* sweep_e = app.add_subcommand("sweep-epsilon", "constrained runs at epsilon center +- delta");
  double sweep_center = 0.0;
  sweep_e->add_option("--epsilon", sweep_center, "sweep center (usually epsilon*)");
  add_common(sweep_e, opts);

  auto* pipeline = app.add_subcommand("pipeline", "preliminary -> constrained -> alpha sweep");
  add_common(pipeline, opts);

  auto* report = app.add_subcommand("report", "aggregate run records into a table");
  std::string report_dir;
  report->add_option("dir", report_dir, "directory with run records")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      emit_error(e.what());
      return kExitUsage;
    }
    return app.exit(e);  // --help
  }

  try {
    if (solve->parsed()) {
      return cmd_solve(opts, problem, method, damping, lr_theta, lr_lambda, solve_steps, tol,
                       solve_epsilon);
    }
    if (preliminary->parsed()) return cmd_preliminary(opts);
    if (train->parsed()) return cmd_train(opts, train_epsilon);
    if (sweep_a->parsed()) return cmd_sweep_alpha(opts, alpha_grid_flag);
    if (sweep_e->parsed()) return cmd_sweep_epsilon(opts, sweep_center);
    if (pipeline->parsed()) return cmd_pipeline(opts);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    emit_error(e.what());
    return kExitUsage;
  } catch (const InvalidTarget& e) {
    emit_error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    emit_error(e.what());
    return kExitDiverged;
  }
  return kExitUsage;
}
