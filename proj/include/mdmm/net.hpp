#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdmm/errors.hpp"

namespace mdmm {

using Matrix = Eigen::MatrixXd;

enum class Activation { Tanh, ReLU };

// Layer-wise description of a small dense network. Hidden layers use the
// spec activation, the output layer is identity. Weights initialize
// uniform in +-1/sqrt(fan_in), deterministic per seed.
struct NetSpec {
  std::vector<int> layer_dims;
  Activation activation = Activation::Tanh;
  std::uint64_t init_seed = 0;
};

// Dense feed-forward net with manual reverse-mode differentiation over a
// flat parameter buffer. Gradients accumulate until clear_grads(); the
// reconstruction and KL passes of the VAE loss share one buffer that way.
class Net {
 public:
  explicit Net(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  int input_dim() const { return spec_.layer_dims.front(); }
  int output_dim() const { return spec_.layer_dims.back(); }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  void clear_grads();

  // batch is n x input_dim, result n x output_dim. Caches activations so
  // backward may be called (repeatedly) for the same batch.
  Matrix forward(const Matrix& batch);

  // Accumulates parameter gradients for upstream d(loss)/d(output) and
  // returns d(loss)/d(input) for chaining.
  Matrix backward(const Matrix& output_grad);

  bool has_cached_forward() const { return has_forward_; }

 private:
  NetSpec spec_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<std::size_t> weight_offset_;  // per layer; bias follows weights
  std::vector<Matrix> acts_;                // acts_[0] = input, acts_[l+1] = layer l output
  bool has_forward_ = false;
};

// Decoupled-weight-decay adaptive moment update (AdamW). Decay is applied
// to the parameters before the moment step. Defaults follow the training
// setup this testbed mirrors: step size 2e-4, weight decay 0.01.
struct AdamW {
  double step_size = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps_num = 1e-8;

  std::int64_t step_count = 0;
  std::vector<double> m;
  std::vector<double> v;

  void step(std::span<double> params, std::span<const double> grads);
};

// Flat little-endian float64 snapshot with a short header (layer dims,
// seed, step count). Used for run resumption and the epsilon* handoff.
void save_snapshot(const std::string& path, const Net& net, std::int64_t step_count);
struct Snapshot {
  NetSpec spec;
  std::int64_t step_count = 0;
  std::vector<double> params;
};
Snapshot load_snapshot(const std::string& path);

}  // namespace mdmm
