#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdmm/multiplier.hpp"
#include "mdmm/testbed.hpp"

namespace mdmm {

enum class RunMode { Preliminary, ConstrainedMDMM, WeightedSweepPoint };

const char* to_string(RunMode m);
RunMode run_mode_from_string(const std::string& s);

// Everything a single run needs; the echo stored in a RunRecord is this
// struct, so any record replays from its own config.
struct ExperimentConfig {
  // data
  double noise_std = 0.3;
  int dataset_size = 4096;
  int heldout_size = 4096;

  // model
  int latent_code_dim = 8;
  std::vector<int> encoder_dims{64, 64, 64, 16};
  std::vector<int> decoder_dims{8, 64, 64, 64};

  // optimizer
  double step_size = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps_num = 1e-8;

  // multiplier dynamics (constrained mode)
  double damping = 1.0;
  double lambda_step = 0.15;

  // training
  std::int64_t steps = 60000;
  int batch_size = 64;
  int n_gen = 4096;

  RunMode mode = RunMode::Preliminary;
  double epsilon = 0.0;  // ConstrainedMDMM only
  double alpha = 1.0;    // WeightedSweepPoint only

  std::vector<double> alpha_grid{0.2, 1.0, 5.0, 25.0, 600.0, 3000.0};
  double epsilon_delta_rel = 0.1;

  std::uint64_t seed = 1;

  void validate() const;  // mode-specific field checks
};

// Reconstruction-loss value the preliminary task settles at under the
// default config (full decoder, noise_std 0.3), averaged over seeds 1-3.
// Useful as a sanity anchor when choosing a constraint target by hand.
inline constexpr double kReferenceEpsilonStar = 0.222;

// Strict JSON round trip: unknown keys are rejected, not ignored.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
// Dotted-key=value override (e.g. "optimizer.step_size=2e-4") applied on
// top of a config; unknown keys rejected.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct TraceRow {
  std::int64_t step = 0;
  double l_recon = 0.0;
  double l_kl = 0.0;
  double lambda = 0.0;
  double g_residual = 0.0;
  double total = 0.0;
};

struct FinalMetrics {
  double l_recon_ema = 0.0;
  double l_kl = 0.0;
  double generation_quality = 0.0;
  double lambda_final = 0.0;
};

struct EpsilonLineage {
  std::string source_label;
  double epsilon_star = 0.0;
};

struct RunRecord {
  ExperimentConfig config;  // resolved echo; replaying it reproduces the run
  std::string label;
  std::uint64_t run_seed = 0;
  std::optional<EpsilonLineage> lineage;
  std::vector<TraceRow> trace;  // thinned to every 50 steps (plus the last)
  FinalMetrics final;
  std::string status;  // Converged / MaxSteps / Diverged
  bool constraint_unreachable = false;
  std::string diagnostic;
  double wall_clock_seconds = 0.0;
};

struct SweepEntry {
  double grid_value = 0.0;
  RunRecord record;
};

struct SweepResult {
  std::vector<SweepEntry> entries;  // strictly increasing grid values
  int argmin_index = -1;            // over completed (non-Diverged) runs; -1 if none
  bool partial = false;             // some run diverged

  const RunRecord* argmin() const {
    return argmin_index >= 0 ? &entries[static_cast<std::size_t>(argmin_index)].record : nullptr;
  }
};

// Preliminary task: deterministic autoencoder trained on L_recon alone;
// returns the converged loss (final EMA) plus the run record. Trained
// weights are discarded, only epsilon* crosses over.
struct PreliminaryResult {
  double epsilon_star = 0.0;
  RunRecord record;
};
PreliminaryResult run_preliminary(const ExperimentConfig& cfg, const std::string& label = "preliminary");

// MDMM-constrained main training: F = L_KL, G = L_recon - epsilon.
RunRecord run_constrained(const ExperimentConfig& cfg, double epsilon,
                          const std::string& label = "constrained",
                          std::optional<EpsilonLineage> lineage = std::nullopt);

// Unconstrained baseline: alpha * L_recon + L_KL.
RunRecord run_weighted(const ExperimentConfig& cfg, double alpha,
                       const std::string& label = "weighted");

// One run_weighted per grid point; failures recorded, sweep continues.
// Results are identical whether points run serially or across jobs.
SweepResult sweep_alpha(const ExperimentConfig& cfg, const std::vector<double>& grid, int jobs = 1);

// Three constrained runs at {center-delta, center, center+delta}.
SweepResult sweep_epsilon(const ExperimentConfig& cfg, double center, double delta, int jobs = 1);

struct FrameworkReport {
  PreliminaryResult preliminary;
  RunRecord constrained;
  SweepResult alpha_sweep;
  double mdmm_quality = 0.0;
  double best_sweep_quality = 0.0;
  double worst_sweep_quality = 0.0;
  std::string render_text() const;
};

// The full protocol: measure epsilon*, train constrained at it, sweep the
// balance weight, compare.
FrameworkReport compare_framework(const ExperimentConfig& cfg, int jobs = 1);

// Persistence (schemas fixed; every file carries kSchemaVersion).
std::string run_record_to_json_text(const RunRecord& record);
RunRecord run_record_from_json_text(const std::string& text);
void write_run_record(const std::filesystem::path& dir, const RunRecord& record);
void write_trace_csv(const std::filesystem::path& dir, const RunRecord& record);
std::string sweep_summary_csv(const SweepResult& sweep);
std::string record_file_name(const RunRecord& record);

// Replays a record's config; used by the provenance check and `report`.
RunRecord replay(const RunRecord& record);

}  // namespace mdmm
