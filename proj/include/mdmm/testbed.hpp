#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include "mdmm/net.hpp"

namespace mdmm {

// Sinusoid mixture generator: x(z)[t] = sum_k z_k sin(2 pi f_k t/64 + phi_k)
// plus Gaussian observation noise. Latent z ~ N(0, I_4).
struct SignalGenerator {
  static constexpr int kLatentDim = 4;
  static constexpr int kSignalLen = 64;
  std::array<double, 4> frequencies{1.0, 2.0, 3.0, 5.0};
  std::array<double, 4> phases{0.0, 0.25 * M_PI, 0.5 * M_PI, 0.75 * M_PI};
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  // Noise-free deterministic render of one latent vector.
  Eigen::RowVectorXd render(const Eigen::Vector4d& z) const;

  // n rows of fresh z ~ N(0,I) draws with observation noise; identical
  // output for identical (seed, n).
  Matrix generate(int n) const;
};

// Encoder maps a signal to concatenated (mu, logvar); decoder maps a
// latent code back to signal space.
struct VaeModel {
  Net encoder;
  Net decoder;
  int latent_code_dim;

  VaeModel(NetSpec encoder_spec, NetSpec decoder_spec, int latent_dim);

  std::size_t param_count() const { return encoder.param_count() + decoder.param_count(); }
  // Concatenated [encoder params, decoder params] copy in/out.
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);
};

struct LossBreakdown {
  double l_recon = 0.0;
  double l_kl = 0.0;
  double g_residual = 0.0;  // l_recon - epsilon
  double lambda_now = 0.0;
  double total = 0.0;
};

// Separate parameter gradients of the two loss terms, each over the
// concatenated [encoder, decoder] layout, so the multiplier assembly can
// weight them independently.
struct VaeGradients {
  std::vector<double> d_recon;
  std::vector<double> d_kl;
};

// Mean absolute error over all entries.
double recon_l1(const Matrix& x, const Matrix& x_hat);

// Batch-mean analytic KL(N(mu, diag sigma^2) || N(0, I)).
double kl_diag_gaussian(const Matrix& mu, const Matrix& logvar);

// Full reparameterized VAE loss pass. noise must be n x latent_code_dim;
// passing it explicitly keeps finite-difference checks exact. Fills grads
// when non-null. epsilon only shifts the reported residual.
LossBreakdown vae_losses(VaeModel& model, const Matrix& batch, const Matrix& noise,
                         double epsilon, VaeGradients* grads);

// Deterministic-autoencoder pass for the preliminary task: z = mu, no KL,
// no sampling. Fills d_recon when grads non-null (d_kl left zero).
double autoencoder_recon(VaeModel& model, const Matrix& batch, VaeGradients* grads);

// Biased-estimator squared MMD with Gaussian kernel, bandwidth from the
// median pairwise distance over the pooled batches.
double mmd2(const Matrix& gen_batch, const Matrix& data_batch);

// Decode n_gen prior samples and score them against held-out data.
// Lower is better.
double generation_quality(VaeModel& model, const Matrix& heldout, int n_gen, std::uint64_t seed);

Matrix standard_normal_matrix(int rows, int cols, std::mt19937_64& rng);

// CSV with one row per signal (64 columns) and the generator config
// echoed as leading comment lines.
std::string dataset_to_csv(const SignalGenerator& gen, const Matrix& data);
Matrix dataset_from_csv(const std::string& text);

}  // namespace mdmm
