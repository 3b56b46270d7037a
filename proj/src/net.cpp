#include "mdmm/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace mdmm {

namespace {

using MapMat = Eigen::Map<Eigen::MatrixXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapMat = Eigen::Map<const Eigen::MatrixXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

Net::Net(NetSpec spec) : spec_(std::move(spec)) {
  if (spec_.layer_dims.size() < 2) throw ConfigError("NetSpec needs at least input and output dims");
  for (int d : spec_.layer_dims) {
    if (d <= 0) throw ConfigError("NetSpec layer dims must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < spec_.layer_dims.size(); ++l) {
    weight_offset_.push_back(total);
    total += static_cast<std::size_t>(spec_.layer_dims[l] + 1) * spec_.layer_dims[l + 1];
  }
  params_.resize(total);
  grads_.assign(total, 0.0);

  std::mt19937_64 rng(spec_.init_seed);
  for (std::size_t l = 0; l + 1 < spec_.layer_dims.size(); ++l) {
    const int fan_in = spec_.layer_dims[l];
    const int fan_out = spec_.layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* w = params_.data() + weight_offset_[l];
    for (int i = 0; i < fan_in * fan_out; ++i) w[i] = dist(rng);
    double* b = w + fan_in * fan_out;
    for (int i = 0; i < fan_out; ++i) b[i] = 0.0;
  }
}

void Net::clear_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

Matrix Net::forward(const Matrix& batch) {
  if (batch.cols() != input_dim()) {
    throw DimensionMismatch("batch width " + std::to_string(batch.cols()) + " vs input dim " +
                            std::to_string(input_dim()));
  }
  const std::size_t n_layers = spec_.layer_dims.size() - 1;
  acts_.assign(n_layers + 1, Matrix());
  acts_[0] = batch;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int in = spec_.layer_dims[l];
    const int out = spec_.layer_dims[l + 1];
    CMapMat w(params_.data() + weight_offset_[l], in, out);
    CMapVec b(params_.data() + weight_offset_[l] + static_cast<std::size_t>(in) * out, out);
    Matrix pre = (acts_[l] * w).rowwise() + b.transpose();
    if (l + 1 < n_layers) {
      if (spec_.activation == Activation::Tanh) {
        acts_[l + 1] = pre.array().tanh();
      } else {
        acts_[l + 1] = pre.cwiseMax(0.0);
      }
    } else {
      acts_[l + 1] = std::move(pre);  // identity output
    }
  }
  has_forward_ = true;
  return acts_.back();
}

Matrix Net::backward(const Matrix& output_grad) {
  if (!has_forward_) throw BackwardBeforeForward();
  if (output_grad.rows() != acts_.back().rows() || output_grad.cols() != output_dim()) {
    throw DimensionMismatch("output grad shape vs cached forward");
  }
  const std::size_t n_layers = spec_.layer_dims.size() - 1;
  Matrix delta = output_grad;
  for (std::size_t l = n_layers; l-- > 0;) {
    const int in = spec_.layer_dims[l];
    const int out = spec_.layer_dims[l + 1];
    if (l + 1 < n_layers) {  // undo applied hidden activation
      if (spec_.activation == Activation::Tanh) {
        delta.array() *= 1.0 - acts_[l + 1].array().square();
      } else {
        delta.array() *= (acts_[l + 1].array() > 0.0).cast<double>();
      }
    }
    CMapMat w(params_.data() + weight_offset_[l], in, out);
    MapMat dw(grads_.data() + weight_offset_[l], in, out);
    MapVec db(grads_.data() + weight_offset_[l] + static_cast<std::size_t>(in) * out, out);
    dw.noalias() += acts_[l].transpose() * delta;
    db += delta.colwise().sum().transpose();
    if (l > 0) {
      delta = delta * w.transpose();
    } else {
      return delta * w.transpose();
    }
  }
  return Matrix();  // unreachable
}

void AdamW::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw DimensionMismatch("params vs grads");
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (m.size() != params.size()) throw DimensionMismatch("moment buffers vs params");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NonFiniteValue("gradient in AdamW step");
  }
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  const double decay = 1.0 - step_size * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] *= decay;
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= step_size * m_hat / (std::sqrt(v_hat) + eps_num);
  }
}

namespace {
constexpr char kSnapshotMagic[8] = {'M', 'D', 'M', 'M', 'N', 'E', 'T', '1'};
}

void save_snapshot(const std::string& path, const Net& net, std::int64_t step_count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open snapshot file for writing: " + path);
  out.write(kSnapshotMagic, sizeof kSnapshotMagic);
  const auto& spec = net.spec();
  const std::uint32_t n_dims = static_cast<std::uint32_t>(spec.layer_dims.size());
  const std::uint32_t act = spec.activation == Activation::Tanh ? 0u : 1u;
  out.write(reinterpret_cast<const char*>(&n_dims), sizeof n_dims);
  out.write(reinterpret_cast<const char*>(&act), sizeof act);
  for (int d : spec.layer_dims) {
    const std::uint32_t v = static_cast<std::uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(&spec.init_seed), sizeof spec.init_seed);
  out.write(reinterpret_cast<const char*>(&step_count), sizeof step_count);
  const std::uint64_t count = net.param_count();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(net.params().data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw ConfigError("snapshot write failed: " + path);
}

Snapshot load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open snapshot file: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kSnapshotMagic, sizeof magic) != 0) {
    throw ConfigError("bad snapshot header: " + path);
  }
  std::uint32_t n_dims = 0, act = 0;
  in.read(reinterpret_cast<char*>(&n_dims), sizeof n_dims);
  in.read(reinterpret_cast<char*>(&act), sizeof act);
  Snapshot snap;
  snap.spec.activation = act == 0 ? Activation::Tanh : Activation::ReLU;
  snap.spec.layer_dims.resize(n_dims);
  for (auto& d : snap.spec.layer_dims) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    d = static_cast<int>(v);
  }
  in.read(reinterpret_cast<char*>(&snap.spec.init_seed), sizeof snap.spec.init_seed);
  in.read(reinterpret_cast<char*>(&snap.step_count), sizeof snap.step_count);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  snap.params.resize(count);
  in.read(reinterpret_cast<char*>(snap.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ConfigError("truncated snapshot: " + path);
  return snap;
}

}  // namespace mdmm
