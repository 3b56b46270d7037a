#include "mdmm/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mdmm/records.hpp"

namespace mdmm {

using json = nlohmann::ordered_json;

namespace {
constexpr double kEmaBeta = 0.999;
constexpr double kAttainmentTol = 0.02;
constexpr int kTraceStride = 50;
}  // namespace

const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::Preliminary: return "preliminary";
    case RunMode::ConstrainedMDMM: return "constrained";
    case RunMode::WeightedSweepPoint: return "weighted";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "preliminary") return RunMode::Preliminary;
  if (s == "constrained") return RunMode::ConstrainedMDMM;
  if (s == "weighted") return RunMode::WeightedSweepPoint;
  throw ConfigError("unknown mode: " + s);
}

void ExperimentConfig::validate() const {
  if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
  if (dataset_size <= 0 || heldout_size <= 0) throw ConfigError("dataset sizes must be positive");
  if (latent_code_dim <= 0) throw ConfigError("latent_code_dim must be positive");
  if (encoder_dims.size() < 2 || decoder_dims.size() < 2) {
    throw ConfigError("net specs need at least input and output dims");
  }
  if (encoder_dims.front() != SignalGenerator::kSignalLen ||
      encoder_dims.back() != 2 * latent_code_dim) {
    throw ConfigError("encoder dims must map signal_len -> 2*latent_code_dim");
  }
  if (decoder_dims.front() != latent_code_dim ||
      decoder_dims.back() != SignalGenerator::kSignalLen) {
    throw ConfigError("decoder dims must map latent_code_dim -> signal_len");
  }
  if (step_size <= 0 || lambda_step <= 0) throw ConfigError("step sizes must be positive");
  if (damping < 0) throw ConfigError("damping must be >= 0");
  if (steps <= 0 || batch_size <= 0 || n_gen <= 0) throw ConfigError("training sizes must be positive");
  if (mode == RunMode::ConstrainedMDMM && epsilon <= 0) {
    throw InvalidTarget("epsilon must be > 0 in constrained mode");
  }
  if (mode == RunMode::WeightedSweepPoint && alpha <= 0) {
    throw ConfigError("alpha must be > 0 in weighted mode");
  }
  for (double a : alpha_grid) {
    if (a <= 0) throw ConfigError("alpha grid values must be > 0");
  }
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"schema", "data", "model", "optimizer", "multiplier", "training", "mode",
                 "epsilon", "alpha", "alpha_grid", "epsilon_delta_rel", "seed"},
             "config");
  ExperimentConfig cfg;
  if (j.contains("schema") && j.at("schema").get<std::string>() != kSchemaVersion) {
    throw ConfigError("unsupported schema: " + j.at("schema").get<std::string>());
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"noise_std", "dataset_size", "heldout_size"}, "data");
    maybe_get(d, "noise_std", cfg.noise_std);
    maybe_get(d, "dataset_size", cfg.dataset_size);
    maybe_get(d, "heldout_size", cfg.heldout_size);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, {"latent_code_dim", "encoder_dims", "decoder_dims"}, "model");
    maybe_get(m, "latent_code_dim", cfg.latent_code_dim);
    maybe_get(m, "encoder_dims", cfg.encoder_dims);
    maybe_get(m, "decoder_dims", cfg.decoder_dims);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"step_size", "beta1", "beta2", "weight_decay", "eps_num"}, "optimizer");
    maybe_get(o, "step_size", cfg.step_size);
    maybe_get(o, "beta1", cfg.beta1);
    maybe_get(o, "beta2", cfg.beta2);
    maybe_get(o, "weight_decay", cfg.weight_decay);
    maybe_get(o, "eps_num", cfg.eps_num);
  }
  if (j.contains("multiplier")) {
    const auto& m = j.at("multiplier");
    check_keys(m, {"damping", "lambda_step"}, "multiplier");
    maybe_get(m, "damping", cfg.damping);
    maybe_get(m, "lambda_step", cfg.lambda_step);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, {"steps", "batch_size", "n_gen"}, "training");
    maybe_get(t, "steps", cfg.steps);
    maybe_get(t, "batch_size", cfg.batch_size);
    maybe_get(t, "n_gen", cfg.n_gen);
  }
  if (j.contains("mode")) cfg.mode = run_mode_from_string(j.at("mode").get<std::string>());
  maybe_get(j, "epsilon", cfg.epsilon);
  maybe_get(j, "alpha", cfg.alpha);
  maybe_get(j, "alpha_grid", cfg.alpha_grid);
  maybe_get(j, "epsilon_delta_rel", cfg.epsilon_delta_rel);
  maybe_get(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema"] = kSchemaVersion;
  j["data"] = {{"noise_std", cfg.noise_std},
               {"dataset_size", cfg.dataset_size},
               {"heldout_size", cfg.heldout_size}};
  j["model"] = {{"latent_code_dim", cfg.latent_code_dim},
                {"encoder_dims", cfg.encoder_dims},
                {"decoder_dims", cfg.decoder_dims}};
  j["optimizer"] = {{"step_size", cfg.step_size},
                    {"beta1", cfg.beta1},
                    {"beta2", cfg.beta2},
                    {"weight_decay", cfg.weight_decay},
                    {"eps_num", cfg.eps_num}};
  j["multiplier"] = {{"damping", cfg.damping}, {"lambda_step", cfg.lambda_step}};
  j["training"] = {{"steps", cfg.steps}, {"batch_size", cfg.batch_size}, {"n_gen", cfg.n_gen}};
  j["mode"] = to_string(cfg.mode);
  j["epsilon"] = cfg.epsilon;
  j["alpha"] = cfg.alpha;
  j["alpha_grid"] = cfg.alpha_grid;
  j["epsilon_delta_rel"] = cfg.epsilon_delta_rel;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  json j = config_to_json(cfg);
  json* node = &j;
  std::string remaining = key;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while ((pos = remaining.find('.')) != std::string::npos) {
    parts.push_back(remaining.substr(0, pos));
    remaining.erase(0, pos + 1);
  }
  parts.push_back(remaining);
  for (const auto& part : parts) {
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown override key '" + key + "'");
    }
    node = &node->at(part);
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // bare strings, e.g. mode=constrained
  *node = parsed;
  cfg = config_from_json_text(j.dump());
}

// ---------------------------------------------------------------------------
// Training runs

namespace {

struct RunSetup {
  Matrix dataset;
  Matrix heldout;
  VaeModel model;
  AdamW opt;
  std::uint64_t run_seed;
};

RunSetup make_setup(const ExperimentConfig& cfg, const std::string& label) {
  SignalGenerator gen;
  gen.noise_std = cfg.noise_std;
  gen.seed = derive_seed(cfg.seed, "dataset");
  Matrix dataset = gen.generate(cfg.dataset_size);
  gen.seed = derive_seed(cfg.seed, "heldout");
  Matrix heldout = gen.generate(cfg.heldout_size);

  const std::uint64_t run_seed = derive_seed(cfg.seed, label);
  NetSpec enc{cfg.encoder_dims, Activation::Tanh, derive_seed(run_seed, "encoder")};
  NetSpec dec{cfg.decoder_dims, Activation::Tanh, derive_seed(run_seed, "decoder")};
  VaeModel model(std::move(enc), std::move(dec), cfg.latent_code_dim);

  AdamW opt;
  opt.step_size = cfg.step_size;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.weight_decay = cfg.weight_decay;
  opt.eps_num = cfg.eps_num;

  return RunSetup{std::move(dataset), std::move(heldout), std::move(model), opt, run_seed};
}

Matrix sample_batch(const Matrix& dataset, int batch_size, std::mt19937_64& rng) {
  std::uniform_int_distribution<long> pick(0, dataset.rows() - 1);
  Matrix batch(batch_size, dataset.cols());
  for (int i = 0; i < batch_size; ++i) batch.row(i) = dataset.row(pick(rng));
  return batch;
}

// Shared minibatch loop. `step_fn` consumes the batch, updates the model
// and returns the step's LossBreakdown, or throws to abort.
template <typename StepFn>
RunRecord train_loop(const ExperimentConfig& cfg, const std::string& label, RunSetup& setup,
                     StepFn&& step_fn) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.config = cfg;
  record.label = label;
  record.run_seed = setup.run_seed;

  std::mt19937_64 rng(derive_seed(setup.run_seed, "stream"));
  double recon_ema = 0.0;
  double kl_ema = 0.0;
  bool ema_init = false;
  double lambda_final = 0.0;

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const Matrix batch = sample_batch(setup.dataset, cfg.batch_size, rng);
    LossBreakdown loss;
    try {
      loss = step_fn(batch, rng, step);
    } catch (const MultiplierDivergence& e) {
      record.status = "Diverged";
      record.diagnostic = e.what();
      break;
    } catch (const NonFiniteValue& e) {
      record.status = "Diverged";
      record.diagnostic = e.what();
      break;
    }
    if (!std::isfinite(loss.total)) {
      record.status = "Diverged";
      record.diagnostic = "non-finite loss at step " + std::to_string(step);
      break;
    }
    if (!ema_init) {
      recon_ema = loss.l_recon;
      kl_ema = loss.l_kl;
      ema_init = true;
    } else {
      recon_ema = kEmaBeta * recon_ema + (1.0 - kEmaBeta) * loss.l_recon;
      kl_ema = kEmaBeta * kl_ema + (1.0 - kEmaBeta) * loss.l_kl;
    }
    lambda_final = loss.lambda_now;
    if (step % kTraceStride == 0 || step == cfg.steps - 1) {
      record.trace.push_back(
          {step, loss.l_recon, loss.l_kl, loss.lambda_now, loss.g_residual, loss.total});
    }
  }

  record.final.l_recon_ema = recon_ema;
  record.final.l_kl = kl_ema;
  record.final.lambda_final = lambda_final;
  if (record.status != "Diverged") {
    // latent draws keyed to the master seed, not the run label, so runs
    // compared under one master seed score against paired samples
    record.final.generation_quality = generation_quality(
        setup.model, setup.heldout, cfg.n_gen, derive_seed(cfg.seed, "genquality"));
    if (cfg.mode == RunMode::ConstrainedMDMM) {
      if (std::abs(recon_ema - cfg.epsilon) <= kAttainmentTol) {
        record.status = "Converged";
      } else {
        record.status = "MaxSteps";
        record.constraint_unreachable = recon_ema < cfg.epsilon - kAttainmentTol;
      }
    } else {
      record.status = "Converged";
    }
  }
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

}  // namespace

PreliminaryResult run_preliminary(const ExperimentConfig& cfg_in, const std::string& label) {
  ExperimentConfig cfg = cfg_in;
  cfg.mode = RunMode::Preliminary;
  cfg.validate();
  RunSetup setup = make_setup(cfg, label);
  VaeGradients grads;
  RunRecord record = train_loop(cfg, label, setup, [&](const Matrix& batch, std::mt19937_64&,
                                                       std::int64_t) {
    LossBreakdown loss;
    loss.l_recon = autoencoder_recon(setup.model, batch, &grads);
    loss.total = loss.l_recon;
    std::vector<double> flat = setup.model.flat_params();
    setup.opt.step(flat, grads.d_recon);
    setup.model.set_flat_params(flat);
    return loss;
  });
  PreliminaryResult result;
  result.record = std::move(record);
  result.epsilon_star = result.record.final.l_recon_ema;
  return result;
}

RunRecord run_constrained(const ExperimentConfig& cfg_in, double epsilon, const std::string& label,
                          std::optional<EpsilonLineage> lineage) {
  if (epsilon <= 0) throw InvalidTarget("epsilon must be > 0, got " + format_double(epsilon));
  ExperimentConfig cfg = cfg_in;
  cfg.mode = RunMode::ConstrainedMDMM;
  cfg.epsilon = epsilon;
  cfg.validate();
  RunSetup setup = make_setup(cfg, label);

  ConstraintState constraint;
  constraint.epsilon = epsilon;
  constraint.damping = cfg.damping;
  constraint.lambda_step = cfg.lambda_step;

  VaeGradients grads;
  std::vector<double> assembled(setup.model.param_count());
  RunRecord record = train_loop(
      cfg, label, setup, [&](const Matrix& batch, std::mt19937_64& rng, std::int64_t) {
        const Matrix noise = standard_normal_matrix(cfg.batch_size, cfg.latent_code_dim, rng);
        LossBreakdown loss = vae_losses(setup.model, batch, noise, epsilon, &grads);
        loss.lambda_now = constraint.lambda;
        // F = L_KL, G = L_recon - epsilon: dF + (lambda + c G) dG per step.
        const double coeff = constraint.lambda + cfg.damping * loss.g_residual;
        for (std::size_t i = 0; i < assembled.size(); ++i) {
          assembled[i] = grads.d_kl[i] + coeff * grads.d_recon[i];
        }
        std::vector<double> flat = setup.model.flat_params();
        setup.opt.step(flat, assembled);
        setup.model.set_flat_params(flat);
        constraint = lambda_update(constraint, loss.g_residual);
        return loss;
      });
  record.lineage = std::move(lineage);
  return record;
}

RunRecord run_weighted(const ExperimentConfig& cfg_in, double alpha, const std::string& label) {
  if (alpha <= 0) throw ConfigError("alpha must be > 0");
  ExperimentConfig cfg = cfg_in;
  cfg.mode = RunMode::WeightedSweepPoint;
  cfg.alpha = alpha;
  cfg.validate();
  RunSetup setup = make_setup(cfg, label);

  VaeGradients grads;
  std::vector<double> assembled(setup.model.param_count());
  return train_loop(cfg, label, setup,
                    [&](const Matrix& batch, std::mt19937_64& rng, std::int64_t) {
                      const Matrix noise =
                          standard_normal_matrix(cfg.batch_size, cfg.latent_code_dim, rng);
                      LossBreakdown loss = vae_losses(setup.model, batch, noise, 0.0, &grads);
                      loss.total = alpha * loss.l_recon + loss.l_kl;
                      for (std::size_t i = 0; i < assembled.size(); ++i) {
                        assembled[i] = alpha * grads.d_recon[i] + grads.d_kl[i];
                      }
                      std::vector<double> flat = setup.model.flat_params();
                      setup.opt.step(flat, assembled);
                      setup.model.set_flat_params(flat);
                      return loss;
                    });
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

SweepResult run_sweep(const std::vector<double>& grid, int jobs,
                      const std::function<RunRecord(std::size_t)>& run_point) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ConfigError("sweep grid must be strictly increasing");
  }
  std::vector<RunRecord> records(grid.size());
  if (jobs <= 1 || grid.size() <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) records[i] = run_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    const int n_threads = std::min<int>(jobs, static_cast<int>(grid.size()));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
      threads.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < grid.size(); i = next.fetch_add(1)) {
          records[i] = run_point(i);
        }
      });
    }
    for (auto& th : threads) th.join();
  }

  SweepResult result;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    result.entries.push_back({grid[i], std::move(records[i])});
  }
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const RunRecord& r = result.entries[i].record;
    if (r.status == "Diverged") {
      result.partial = true;
      continue;
    }
    if (result.argmin_index < 0 ||
        r.final.generation_quality <
            result.entries[static_cast<std::size_t>(result.argmin_index)]
                .record.final.generation_quality) {
      result.argmin_index = static_cast<int>(i);
    }
  }
  return result;
}

}  // namespace

SweepResult sweep_alpha(const ExperimentConfig& cfg, const std::vector<double>& grid, int jobs) {
  if (grid.empty()) throw ConfigError("alpha grid must be non-empty");
  return run_sweep(grid, jobs, [&](std::size_t i) {
    const std::string label = "alpha_" + format_double(grid[i]);
    try {
      return run_weighted(cfg, grid[i], label);
    } catch (const std::exception& e) {
      RunRecord r;
      r.config = cfg;
      r.config.mode = RunMode::WeightedSweepPoint;
      r.config.alpha = grid[i];
      r.label = label;
      r.status = "Diverged";
      r.diagnostic = e.what();
      return r;
    }
  });
}

SweepResult sweep_epsilon(const ExperimentConfig& cfg, double center, double delta, int jobs) {
  if (center - delta <= 0) throw InvalidTarget("epsilon sweep lower edge must stay positive");
  const std::vector<double> grid{center - delta, center, center + delta};
  const std::array<const char*, 3> labels{"epsilon_lo", "epsilon_center", "epsilon_hi"};
  // Degenerate delta = 0 gives an all-equal grid; run it as three
  // same-target runs on distinct derived seeds instead of rejecting.
  auto run_point = [&](std::size_t i) {
    try {
      return run_constrained(cfg, grid[i], labels[i]);
    } catch (const std::exception& e) {
      RunRecord r;
      r.config = cfg;
      r.config.mode = RunMode::ConstrainedMDMM;
      r.config.epsilon = grid[i];
      r.label = labels[i];
      r.status = "Diverged";
      r.diagnostic = e.what();
      return r;
    }
  };
  if (delta == 0.0) {
    SweepResult result;
    std::vector<RunRecord> records(3);
    for (std::size_t i = 0; i < 3; ++i) records[i] = run_point(i);
    for (std::size_t i = 0; i < 3; ++i) result.entries.push_back({grid[i], std::move(records[i])});
    for (std::size_t i = 0; i < result.entries.size(); ++i) {
      const RunRecord& r = result.entries[i].record;
      if (r.status == "Diverged") {
        result.partial = true;
        continue;
      }
      if (result.argmin_index < 0 ||
          r.final.generation_quality <
              result.entries[static_cast<std::size_t>(result.argmin_index)]
                  .record.final.generation_quality) {
        result.argmin_index = static_cast<int>(i);
      }
    }
    return result;
  }
  return run_sweep(grid, jobs, run_point);
}

FrameworkReport compare_framework(const ExperimentConfig& cfg, int jobs) {
  FrameworkReport report;
  report.preliminary = run_preliminary(cfg);
  EpsilonLineage lineage{report.preliminary.record.label, report.preliminary.epsilon_star};
  report.constrained =
      run_constrained(cfg, report.preliminary.epsilon_star, "mdmm_at_epsilon_star", lineage);
  report.alpha_sweep = sweep_alpha(cfg, cfg.alpha_grid, jobs);

  report.mdmm_quality = report.constrained.final.generation_quality;
  bool first = true;
  for (const auto& entry : report.alpha_sweep.entries) {
    if (entry.record.status == "Diverged") continue;
    const double q = entry.record.final.generation_quality;
    if (first) {
      report.best_sweep_quality = report.worst_sweep_quality = q;
      first = false;
    } else {
      report.best_sweep_quality = std::min(report.best_sweep_quality, q);
      report.worst_sweep_quality = std::max(report.worst_sweep_quality, q);
    }
  }
  return report;
}

std::string FrameworkReport::render_text() const {
  std::ostringstream out;
  out << "framework comparison (" << kSchemaVersion << ")\n";
  out << "epsilon* = " << format_double(preliminary.epsilon_star) << "\n\n";
  out << "  run                     l_recon      l_kl         quality      status\n";
  auto row = [&out](const std::string& name, const RunRecord& r) {
    out << "  " << std::left << std::setw(22) << name << "  " << std::setw(11)
        << format_double(r.final.l_recon_ema) << "  " << std::setw(11)
        << format_double(r.final.l_kl) << "  " << std::setw(11)
        << format_double(r.final.generation_quality) << "  " << r.status << "\n";
  };
  row("mdmm@epsilon*", constrained);
  for (const auto& entry : alpha_sweep.entries) {
    row("alpha=" + format_double(entry.grid_value), entry.record);
  }
  out << "\nmdmm quality " << format_double(mdmm_quality) << " vs sweep best "
      << format_double(best_sweep_quality) << " / worst " << format_double(worst_sweep_quality)
      << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Persistence

std::string run_record_to_json_text(const RunRecord& record) {
  json j;
  j["schema"] = kSchemaVersion;
  j["label"] = record.label;
  j["run_seed"] = record.run_seed;
  j["config"] = config_to_json(record.config);
  if (record.lineage) {
    j["lineage"] = {{"source_label", record.lineage->source_label},
                    {"epsilon_star", record.lineage->epsilon_star}};
  } else {
    j["lineage"] = nullptr;
  }
  j["status"] = record.status;
  j["constraint_unreachable"] = record.constraint_unreachable;
  j["diagnostic"] = record.diagnostic;
  j["final"] = {{"l_recon_ema", record.final.l_recon_ema},
                {"l_kl", record.final.l_kl},
                {"generation_quality", record.final.generation_quality},
                {"lambda_final", record.final.lambda_final}};
  j["wall_clock_seconds"] = record.wall_clock_seconds;
  json trace = json::array();
  for (const auto& row : record.trace) {
    trace.push_back({row.step, row.l_recon, row.l_kl, row.lambda, row.g_residual, row.total});
  }
  j["trace"] = std::move(trace);
  return j.dump(2) + "\n";
}

RunRecord run_record_from_json_text(const std::string& text) {
  json j = json::parse(text);
  if (!j.contains("schema") || j.at("schema").get<std::string>() != kSchemaVersion) {
    throw ConfigError("run record has unsupported schema");
  }
  RunRecord record;
  record.label = j.at("label").get<std::string>();
  record.run_seed = j.at("run_seed").get<std::uint64_t>();
  record.config = config_from_json_text(j.at("config").dump());
  if (!j.at("lineage").is_null()) {
    record.lineage = EpsilonLineage{j.at("lineage").at("source_label").get<std::string>(),
                                    j.at("lineage").at("epsilon_star").get<double>()};
  }
  record.status = j.at("status").get<std::string>();
  record.constraint_unreachable = j.at("constraint_unreachable").get<bool>();
  record.diagnostic = j.at("diagnostic").get<std::string>();
  const auto& f = j.at("final");
  record.final = {f.at("l_recon_ema").get<double>(), f.at("l_kl").get<double>(),
                  f.at("generation_quality").get<double>(), f.at("lambda_final").get<double>()};
  record.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  for (const auto& row : j.at("trace")) {
    record.trace.push_back({row.at(0).get<std::int64_t>(), row.at(1).get<double>(),
                            row.at(2).get<double>(), row.at(3).get<double>(),
                            row.at(4).get<double>(), row.at(5).get<double>()});
  }
  return record;
}

std::string record_file_name(const RunRecord& record) {
  return record.label + "_" + std::to_string(record.config.seed) + ".json";
}

void write_run_record(const std::filesystem::path& dir, const RunRecord& record) {
  atomic_write_file(dir / record_file_name(record), run_record_to_json_text(record));
}

void write_trace_csv(const std::filesystem::path& dir, const RunRecord& record) {
  std::ostringstream out;
  out << "# schema " << kSchemaVersion << "\n";
  out << "step,l_recon,l_kl,lambda,g_residual,total\n";
  for (const auto& row : record.trace) {
    out << row.step << ',' << format_double(row.l_recon) << ',' << format_double(row.l_kl) << ','
        << format_double(row.lambda) << ',' << format_double(row.g_residual) << ','
        << format_double(row.total) << "\n";
  }
  const std::string name = record.label + "_" + std::to_string(record.config.seed) + "_trace.csv";
  atomic_write_file(dir / name, out.str());
}

std::string sweep_summary_csv(const SweepResult& sweep) {
  std::ostringstream out;
  out << "# schema " << kSchemaVersion << "\n";
  out << "grid_value,final_l_recon,final_l_kl,generation_quality,status\n";
  for (const auto& entry : sweep.entries) {
    const RunRecord& r = entry.record;
    out << format_double(entry.grid_value) << ',' << format_double(r.final.l_recon_ema) << ','
        << format_double(r.final.l_kl) << ',' << format_double(r.final.generation_quality) << ','
        << r.status << "\n";
  }
  return out.str();
}

RunRecord replay(const RunRecord& record) {
  const ExperimentConfig& cfg = record.config;
  switch (cfg.mode) {
    case RunMode::Preliminary:
      return run_preliminary(cfg, record.label).record;
    case RunMode::ConstrainedMDMM:
      return run_constrained(cfg, cfg.epsilon, record.label, record.lineage);
    case RunMode::WeightedSweepPoint:
      return run_weighted(cfg, cfg.alpha, record.label);
  }
  throw ConfigError("unknown mode in record");
}

}  // namespace mdmm
