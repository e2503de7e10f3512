#pragma once

#include "latf/nn.hpp"
#include "latf/prior.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace latf::flow {

/// Affine coupling layer. Channels in the fixed set pass through unchanged;
/// the updated set becomes u * exp(s(fixed)) + t(fixed), where s is the scale
/// net output soft-clamped to [-kScaleClamp, kScaleClamp].
struct CouplingLayer {
  int parity = 0;
  nn::DenseNet scale;
  nn::DenseNet shift;
};

inline constexpr double kScaleClamp = 5.0;

struct FlowTape;

struct FlowResult {
  Eigen::MatrixXd points;   // dim x n
  Eigen::VectorXd log_det;  // per column
};

enum class FlowInit {
  identity,  // random hidden layers, zero output layers: exact identity map
  random,    // every layer random; used for property tests
};

/// Stack of coupling layers with alternating parity. forward() maps the
/// encoder (IB) space to prior space; inverse() maps back.
class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(int dim, int n_layers, const std::vector<int>& hidden, std::mt19937_64& rng,
            FlowInit init = FlowInit::identity);

  int dim() const { return dim_; }
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  std::vector<CouplingLayer>& layers() { return layers_; }

  /// Appends an exact identity layer (zero nets) with the next parity.
  void append_identity_layer(const std::vector<int>& hidden);

  FlowResult forward_batch(const Eigen::MatrixXd& u, FlowTape* tape = nullptr) const;
  FlowResult inverse_batch(const Eigen::MatrixXd& z) const;

  std::pair<Eigen::VectorXd, double> forward(const Eigen::VectorXd& u) const;
  std::pair<Eigen::VectorXd, double> inverse(const Eigen::VectorXd& z) const;

  /// Reverse pass: given dL/dz and dL/dlog_det per column, accumulates
  /// parameter gradients into `grads` and returns dL/du.
  Eigen::MatrixXd backward(const FlowTape& tape, const Eigen::MatrixXd& grad_points,
                           const Eigen::VectorXd& grad_log_det, FlowModel& grads) const;

  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;

  std::vector<int> fixed_channels(int parity) const;
  std::vector<int> updated_channels(int parity) const;

 private:
  int dim_ = 0;
  std::vector<CouplingLayer> layers_;
};

struct CouplingTape {
  Eigen::MatrixXd input;
  Eigen::MatrixXd scale;  // clamped s values (updated channels x n)
  Eigen::MatrixXd raw_scale;
  nn::Tape scale_tape;
  nn::Tape shift_tape;
};

struct FlowTape {
  std::vector<CouplingTape> layers;
};

/// log p(u) = log r(F(u)) + log |det dF/du|, the density the flow assigns to
/// an IB-space point under `prior`.
double latent_log_likelihood(const FlowModel& flow, const prior::TiltedPrior& prior,
                             const Eigen::VectorXd& u);
Eigen::VectorXd latent_log_likelihood_batch(const FlowModel& flow, const prior::TiltedPrior& prior,
                                            const Eigen::MatrixXd& u);

}  // namespace latf::flow
