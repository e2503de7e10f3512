#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace latf::nn {

enum class Activation { identity, tanh, relu };

std::string to_string(Activation activation);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
};

/// Per-layer activations recorded by DenseNet::forward_batch and consumed by
/// DenseNet::backward. Columns are samples.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> outputs;

  bool empty() const { return inputs.empty(); }
  void clear() {
    inputs.clear();
    outputs.clear();
  }
};

/// Fully connected feed-forward network. Batched calls take samples as
/// columns, so a batch of B inputs is an (input_dim x B) matrix.
class DenseNet {
 public:
  DenseNet() = default;

  /// widths = {in, hidden..., out}. Hidden layers use `hidden`, the final
  /// layer uses `output`. All parameters start at zero.
  DenseNet(const std::vector<int>& widths, Activation hidden, Activation output);

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;
  std::vector<int> widths() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  void init_fan_in(std::mt19937_64& rng);
  void set_zero();
  void zero_last_layer();

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;

  /// Reverse pass for the batch recorded in `tape`. Parameter gradients are
  /// accumulated (added) into `grads`, which must have this net's shape; the
  /// gradient with respect to the input batch is returned.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& upstream,
                           DenseNet& grads) const;

  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

  bool all_finite() const;
  bool same_shape(const DenseNet& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct StepReport {
  bool applied = true;
  std::string diagnostics;
};

/// Adaptive-moment optimizer over a list of flat parameter blocks.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const std::vector<std::size_t>& block_sizes);

  /// Applies one update. A non-finite gradient entry rejects the whole step:
  /// parameters and moments are left untouched and the report names the
  /// offending block and index.
  StepReport step(const std::vector<std::span<double>>& params,
                  const std::vector<std::span<double>>& grads);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_count_ = 0;
};

std::vector<std::size_t> block_sizes(const std::vector<std::span<double>>& blocks);

}  // namespace latf::nn
