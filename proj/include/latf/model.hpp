#pragma once

#include "latf/flow.hpp"
#include "latf/nn.hpp"
#include "latf/prior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace latf::spib {

/// Gaussian encoder: u ~ N(mean_net(X), sigma^2 I) with one input-independent sigma.
struct EncoderParams {
  nn::DenseNet mean_net;
  double log_sigma = 0.0;

  double sigma() const;
};

/// Future-state classifier q(y | z); softmax over `logits_net` outputs.
struct DecoderParams {
  nn::DenseNet logits_net;
};

/// Encoder, flow, decoder and prior settings of one trained model.
///
/// Orientation: the encoder output u lives in the IB space and the flow maps
/// IB space to prior space. Decoding and the prior terms both act on the flow
/// image F(u); a model without coupling layers (stage 1) uses F = identity.
struct LatfModel {
  EncoderParams encoder;
  DecoderParams decoder;
  flow::FlowModel flow;
  double tau = 0.0;
  int latent_dim = 2;
  double beta = 0.01;
  int lag = 1;
  int n_states = 0;
  std::vector<int> state_history;         // state count after each relabel round
  std::vector<double> temperature_tags;   // training temperature tags
  std::uint64_t config_hash = 0;

  int input_dim() const { return encoder.mean_net.input_dim(); }
  prior::TiltedPrior prior(double temperature = 1.0) const;

  /// Deterministic projection mu(X), column-wise.
  Eigen::MatrixXd encode_mean(const Eigen::MatrixXd& descriptors) const;
  /// One draw u = mu + sigma * xi per column.
  Eigen::MatrixXd encode_sample(const Eigen::MatrixXd& descriptors, std::uint64_t seed) const;
  /// F(u); identity when the flow has no layers.
  flow::FlowResult to_prior_space(const Eigen::MatrixXd& latent) const;
  /// F^{-1}(z).
  Eigen::MatrixXd to_latent_space(const Eigen::MatrixXd& prior_points) const;
  /// Softmax of the decoder at prior-space points (k x n).
  Eigen::MatrixXd state_probabilities(const Eigen::MatrixXd& prior_points) const;
  /// argmax_y q(y | z) for prior-space points.
  std::vector<int> decode_states(const Eigen::MatrixXd& prior_points) const;
  /// argmax_y q(y | F(mu(X))) for raw descriptors.
  std::vector<int> assign_states(const Eigen::MatrixXd& descriptors) const;
  /// log r_T(F(u)) + log|det dF/du| for IB-space points.
  Eigen::VectorXd log_likelihood(const Eigen::MatrixXd& latent, double temperature = 1.0) const;

  /// FNV-1a over all parameter values.
  std::uint64_t parameter_hash() const;

  std::vector<std::span<double>> parameter_blocks(bool include_flow = true);
};

/// Gradient buffers shaped like a LatfModel's trainable parameters.
struct ModelGradients {
  nn::DenseNet encoder;
  double log_sigma = 0.0;
  nn::DenseNet decoder;
  flow::FlowModel flow;

  static ModelGradients zeros_like(const LatfModel& model);
  void set_zero();
  std::vector<std::span<double>> blocks(bool include_flow = true);
};

/// Numerically stable log-softmax over each column.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

}  // namespace latf::spib
