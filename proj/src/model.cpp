#include "latf/model.hpp"

#include "latf/hash.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace latf {

std::string hex64(std::uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace latf

namespace latf::spib {

namespace {

constexpr Eigen::Index kChunk = 8192;

template <typename F>
void for_each_chunk(Eigen::Index n, F&& f) {
  for (Eigen::Index begin = 0; begin < n; begin += kChunk) f(begin, std::min(kChunk, n - begin));
}

}  // namespace

double EncoderParams::sigma() const { return std::exp(log_sigma); }

prior::TiltedPrior LatfModel::prior(double temperature) const {
  return prior::TiltedPrior(tau, latent_dim, temperature);
}

Eigen::MatrixXd LatfModel::encode_mean(const Eigen::MatrixXd& descriptors) const {
  Eigen::MatrixXd out(latent_dim, descriptors.cols());
  for_each_chunk(descriptors.cols(), [&](Eigen::Index b, Eigen::Index n) {
    out.middleCols(b, n) = encoder.mean_net.forward_batch(descriptors.middleCols(b, n));
  });
  return out;
}

Eigen::MatrixXd LatfModel::encode_sample(const Eigen::MatrixXd& descriptors, std::uint64_t seed) const {
  Eigen::MatrixXd out = encode_mean(descriptors);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = encoder.sigma();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * normal(rng);
  return out;
}

flow::FlowResult LatfModel::to_prior_space(const Eigen::MatrixXd& latent) const {
  if (flow.layer_count() == 0) return {latent, Eigen::VectorXd::Zero(latent.cols())};
  flow::FlowResult out{Eigen::MatrixXd(latent.rows(), latent.cols()), Eigen::VectorXd(latent.cols())};
  for_each_chunk(latent.cols(), [&](Eigen::Index b, Eigen::Index n) {
    flow::FlowResult r = flow.forward_batch(latent.middleCols(b, n));
    out.points.middleCols(b, n) = r.points;
    out.log_det.segment(b, n) = r.log_det;
  });
  return out;
}

Eigen::MatrixXd LatfModel::to_latent_space(const Eigen::MatrixXd& prior_points) const {
  if (flow.layer_count() == 0) return prior_points;
  Eigen::MatrixXd out(prior_points.rows(), prior_points.cols());
  for_each_chunk(prior_points.cols(), [&](Eigen::Index b, Eigen::Index n) {
    out.middleCols(b, n) = flow.inverse_batch(prior_points.middleCols(b, n)).points;
  });
  return out;
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double m = out.col(j).maxCoeff();
    const double lse = m + std::log((out.col(j).array() - m).exp().sum());
    out.col(j).array() -= lse;
  }
  return out;
}

Eigen::MatrixXd LatfModel::state_probabilities(const Eigen::MatrixXd& prior_points) const {
  Eigen::MatrixXd out(n_states, prior_points.cols());
  for_each_chunk(prior_points.cols(), [&](Eigen::Index b, Eigen::Index n) {
    out.middleCols(b, n) =
        log_softmax(decoder.logits_net.forward_batch(prior_points.middleCols(b, n))).array().exp().matrix();
  });
  return out;
}

std::vector<int> LatfModel::decode_states(const Eigen::MatrixXd& prior_points) const {
  std::vector<int> states(static_cast<std::size_t>(prior_points.cols()));
  for_each_chunk(prior_points.cols(), [&](Eigen::Index b, Eigen::Index n) {
    const Eigen::MatrixXd logits = decoder.logits_net.forward_batch(prior_points.middleCols(b, n));
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      logits.col(j).maxCoeff(&best);
      states[static_cast<std::size_t>(b + j)] = static_cast<int>(best);
    }
  });
  return states;
}

std::vector<int> LatfModel::assign_states(const Eigen::MatrixXd& descriptors) const {
  return decode_states(to_prior_space(encode_mean(descriptors)).points);
}

Eigen::VectorXd LatfModel::log_likelihood(const Eigen::MatrixXd& latent, double temperature) const {
  const flow::FlowResult r = to_prior_space(latent);
  return prior(temperature).log_density_batch(r.points) + r.log_det;
}

std::uint64_t LatfModel::parameter_hash() const {
  std::uint64_t h = fnv1a64("latf-model");
  for (auto b : encoder.mean_net.parameter_blocks()) h = fnv1a64(b, h);
  h = fnv1a64(std::span<const double>(&encoder.log_sigma, 1), h);
  for (auto b : decoder.logits_net.parameter_blocks()) h = fnv1a64(b, h);
  for (auto b : flow.parameter_blocks()) h = fnv1a64(b, h);
  h = fnv1a64(std::span<const double>(&tau, 1), h);
  return h;
}

std::vector<std::span<double>> LatfModel::parameter_blocks(bool include_flow) {
  std::vector<std::span<double>> blocks = encoder.mean_net.parameter_blocks();
  blocks.emplace_back(&encoder.log_sigma, 1);
  for (auto b : decoder.logits_net.parameter_blocks()) blocks.push_back(b);
  if (include_flow) {
    for (auto b : flow.parameter_blocks()) blocks.push_back(b);
  }
  return blocks;
}

ModelGradients ModelGradients::zeros_like(const LatfModel& model) {
  ModelGradients g;
  g.encoder = model.encoder.mean_net;
  g.decoder = model.decoder.logits_net;
  g.flow = model.flow;
  g.set_zero();
  return g;
}

void ModelGradients::set_zero() {
  encoder.set_zero();
  log_sigma = 0.0;
  decoder.set_zero();
  flow.set_zero();
}

std::vector<std::span<double>> ModelGradients::blocks(bool include_flow) {
  std::vector<std::span<double>> out = encoder.parameter_blocks();
  out.emplace_back(&log_sigma, 1);
  for (auto b : decoder.parameter_blocks()) out.push_back(b);
  if (include_flow) {
    for (auto b : flow.parameter_blocks()) out.push_back(b);
  }
  return out;
}

}  // namespace latf::spib
