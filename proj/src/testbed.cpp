#include "mdmm/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mdmm/records.hpp"

namespace mdmm {

Matrix standard_normal_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out(i, j) = dist(rng);
  }
  return out;
}

Eigen::RowVectorXd SignalGenerator::render(const Eigen::Vector4d& z) const {
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(kSignalLen);
  for (int k = 0; k < kLatentDim; ++k) {
    for (int t = 0; t < kSignalLen; ++t) {
      x[t] += z[k] * std::sin(2.0 * M_PI * frequencies[k] * t / kSignalLen + phases[k]);
    }
  }
  return x;
}

Matrix SignalGenerator::generate(int n) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix out(n, kSignalLen);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d z;
    for (int k = 0; k < kLatentDim; ++k) z[k] = dist(rng);
    out.row(i) = render(z);
    if (noise_std > 0.0) {
      for (int t = 0; t < kSignalLen; ++t) out(i, t) += noise_std * dist(rng);
    }
  }
  return out;
}

VaeModel::VaeModel(NetSpec encoder_spec, NetSpec decoder_spec, int latent_dim)
    : encoder(std::move(encoder_spec)), decoder(std::move(decoder_spec)), latent_code_dim(latent_dim) {
  if (encoder.output_dim() != 2 * latent_code_dim) {
    throw ConfigError("encoder output dim must be 2 * latent_code_dim");
  }
  if (decoder.input_dim() != latent_code_dim) {
    throw ConfigError("decoder input dim must equal latent_code_dim");
  }
}

std::vector<double> VaeModel::flat_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), encoder.params().begin(), encoder.params().end());
  flat.insert(flat.end(), decoder.params().begin(), decoder.params().end());
  return flat;
}

void VaeModel::set_flat_params(std::span<const double> flat) {
  if (flat.size() != param_count()) throw DimensionMismatch("flat param size vs model");
  std::copy(flat.begin(), flat.begin() + static_cast<long>(encoder.param_count()),
            encoder.params().begin());
  std::copy(flat.begin() + static_cast<long>(encoder.param_count()), flat.end(),
            decoder.params().begin());
}

double recon_l1(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw DimensionMismatch("recon_l1 shapes");
  }
  return (x - x_hat).cwiseAbs().sum() / static_cast<double>(x.size());
}

double kl_diag_gaussian(const Matrix& mu, const Matrix& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw DimensionMismatch("kl_diag_gaussian shapes");
  }
  if (!logvar.allFinite() || !mu.allFinite()) throw NonFiniteValue("kl_diag_gaussian input");
  const double per_batch =
      0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
  return per_batch / static_cast<double>(mu.rows());
}

namespace {

void collect_grads(const VaeModel& model, std::vector<double>& out) {
  out.clear();
  out.reserve(model.param_count());
  out.insert(out.end(), model.encoder.grads().begin(), model.encoder.grads().end());
  out.insert(out.end(), model.decoder.grads().begin(), model.decoder.grads().end());
}

}  // namespace

LossBreakdown vae_losses(VaeModel& model, const Matrix& batch, const Matrix& noise,
                         double epsilon, VaeGradients* grads) {
  const int n = static_cast<int>(batch.rows());
  const int d = model.latent_code_dim;
  if (noise.rows() != n || noise.cols() != d) throw DimensionMismatch("noise shape vs batch/latent");

  const Matrix enc_out = model.encoder.forward(batch);  // n x 2d
  const Matrix mu = enc_out.leftCols(d);
  const Matrix logvar = enc_out.rightCols(d);
  const Matrix sigma = (0.5 * logvar.array()).exp();
  const Matrix z = mu + sigma.cwiseProduct(noise);
  const Matrix x_hat = model.decoder.forward(z);

  LossBreakdown out;
  out.l_recon = recon_l1(batch, x_hat);
  out.l_kl = kl_diag_gaussian(mu, logvar);
  out.g_residual = out.l_recon - epsilon;
  out.total = out.l_recon + out.l_kl;

  if (grads) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    // Reconstruction term: through the decoder, then the reparameterized
    // sample back into the encoder.
    model.encoder.clear_grads();
    model.decoder.clear_grads();
    const Matrix d_xhat = (x_hat - batch).array().sign() * scale;
    const Matrix d_z = model.decoder.backward(d_xhat);
    Matrix d_enc(n, 2 * d);
    d_enc.leftCols(d) = d_z;
    d_enc.rightCols(d) = 0.5 * d_z.cwiseProduct(sigma).cwiseProduct(noise);
    model.encoder.backward(d_enc);
    collect_grads(model, grads->d_recon);

    // KL term: encoder only.
    model.encoder.clear_grads();
    model.decoder.clear_grads();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix d_enc_kl(n, 2 * d);
    d_enc_kl.leftCols(d) = mu * inv_n;
    d_enc_kl.rightCols(d) = 0.5 * (logvar.array().exp() - 1.0) * inv_n;
    model.encoder.backward(d_enc_kl);
    collect_grads(model, grads->d_kl);
  }
  return out;
}

double autoencoder_recon(VaeModel& model, const Matrix& batch, VaeGradients* grads) {
  const int d = model.latent_code_dim;
  const Matrix enc_out = model.encoder.forward(batch);
  const Matrix z = enc_out.leftCols(d);  // z = mu, deterministic
  const Matrix x_hat = model.decoder.forward(z);
  const double loss = recon_l1(batch, x_hat);

  if (grads) {
    model.encoder.clear_grads();
    model.decoder.clear_grads();
    const double scale = 1.0 / static_cast<double>(batch.size());
    const Matrix d_xhat = (x_hat - batch).array().sign() * scale;
    const Matrix d_z = model.decoder.backward(d_xhat);
    Matrix d_enc = Matrix::Zero(batch.rows(), 2 * d);
    d_enc.leftCols(d) = d_z;
    model.encoder.backward(d_enc);
    collect_grads(model, grads->d_recon);
    grads->d_kl.assign(model.param_count(), 0.0);
  }
  return loss;
}

double mmd2(const Matrix& gen_batch, const Matrix& data_batch) {
  const long n = gen_batch.rows();
  const long m = data_batch.rows();
  if (n == 0 || m == 0) throw EmptyBatch();
  if (gen_batch.cols() != data_batch.cols()) throw DimensionMismatch("mmd2 widths");

  Matrix pooled(n + m, gen_batch.cols());
  pooled.topRows(n) = gen_batch;
  pooled.bottomRows(m) = data_batch;

  // Squared distances via the Gram matrix.
  const Eigen::VectorXd sq = pooled.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * pooled * pooled.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);

  // Median heuristic over distinct pooled pairs.
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>((n + m) * (n + m - 1) / 2));
  for (long i = 0; i < n + m; ++i) {
    for (long j = i + 1; j < n + m; ++j) dists.push_back(std::sqrt(d2(i, j)));
  }
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double bandwidth = dists[mid];
  if (bandwidth <= 0.0) bandwidth = 1.0;  // degenerate pooled set

  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  const Matrix k = (-gamma * d2.array()).exp();
  const double kxx = k.topLeftCorner(n, n).sum() / static_cast<double>(n * n);
  const double kyy = k.bottomRightCorner(m, m).sum() / static_cast<double>(m * m);
  const double kxy = k.topRightCorner(n, m).sum() / static_cast<double>(n * m);
  return kxx + kyy - 2.0 * kxy;
}

std::string dataset_to_csv(const SignalGenerator& gen, const Matrix& data) {
  std::ostringstream out;
  out << "# schema " << kSchemaVersion << "\n";
  out << "# generator noise_std=" << format_double(gen.noise_std) << " seed=" << gen.seed << "\n";
  out << "# frequencies=";
  for (int k = 0; k < SignalGenerator::kLatentDim; ++k) {
    out << (k ? "," : "") << format_double(gen.frequencies[static_cast<std::size_t>(k)]);
  }
  out << " phases=";
  for (int k = 0; k < SignalGenerator::kLatentDim; ++k) {
    out << (k ? "," : "") << format_double(gen.phases[static_cast<std::size_t>(k)]);
  }
  out << "\n";
  for (long i = 0; i < data.rows(); ++i) {
    for (long j = 0; j < data.cols(); ++j) {
      out << (j ? "," : "") << format_double(data(i, j));
    }
    out << "\n";
  }
  return out.str();
}

Matrix dataset_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DimensionMismatch("ragged dataset CSV");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyBatch();
  Matrix out(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
  for (long i = 0; i < out.rows(); ++i) {
    for (long j = 0; j < out.cols(); ++j) out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return out;
}

double generation_quality(VaeModel& model, const Matrix& heldout, int n_gen, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Matrix z = standard_normal_matrix(n_gen, model.latent_code_dim, rng);
  const Matrix decoded = model.decoder.forward(z);
  return mmd2(decoded, heldout);
}

}  // namespace mdmm
