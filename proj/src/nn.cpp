#include "latf/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace latf::nn {

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

void apply_activation(Eigen::MatrixXd& m, Activation activation) {
  switch (activation) {
    case Activation::identity:
      break;
    case Activation::tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::relu:
      m = m.cwiseMax(0.0);
      break;
  }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the post-activation output.
void apply_activation_derivative(Eigen::MatrixXd& grad, const Eigen::MatrixXd& output,
                                 Activation activation) {
  switch (activation) {
    case Activation::identity:
      break;
    case Activation::tanh:
      grad.array() *= 1.0 - output.array().square();
      break;
    case Activation::relu:
      grad.array() *= (output.array() > 0.0).cast<double>();
      break;
  }
}

}  // namespace

DenseNet::DenseNet(const std::vector<int>& widths, Activation hidden, Activation output) {
  if (widths.size() < 2) throw std::invalid_argument("DenseNet needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("DenseNet widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::Zero(widths[l + 1], widths[l]);
    layer.bias = Eigen::VectorXd::Zero(widths[l + 1]);
    layer.activation = (l + 2 == widths.size()) ? output : hidden;
    layers_.push_back(std::move(layer));
  }
}

int DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<int> DenseNet::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& layer : layers_) w.push_back(static_cast<int>(layer.weight.rows()));
  return w;
}

void DenseNet::init_fan_in(std::mt19937_64& rng) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = dist(rng);
    }
    layer.bias.setZero();
  }
}

void DenseNet::set_zero() {
  for (auto& layer : layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

void DenseNet::zero_last_layer() {
  if (layers_.empty()) return;
  layers_.back().weight.setZero();
  layers_.back().bias.setZero();
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd batch = x;
  return forward_batch(batch).col(0);
}

Eigen::MatrixXd DenseNet::forward_batch(const Eigen::MatrixXd& x, Tape* tape) const {
  if (layers_.empty()) throw std::logic_error("forward on an empty DenseNet");
  if (x.rows() != input_dim()) {
    std::ostringstream msg;
    msg << "DenseNet input dimension mismatch: expected " << input_dim() << ", got " << x.rows();
    throw std::invalid_argument(msg.str());
  }
  if (tape != nullptr) tape->clear();
  Eigen::MatrixXd a = x;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    apply_activation(z, layer.activation);
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(a));
      tape->outputs.push_back(z);
    }
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd DenseNet::backward(const Tape& tape, const Eigen::MatrixXd& upstream,
                                   DenseNet& grads) const {
  if (tape.empty() || tape.inputs.size() != layers_.size()) {
    throw std::logic_error("DenseNet::backward called without a recorded forward pass");
  }
  if (!same_shape(grads)) throw std::invalid_argument("gradient buffer shape does not match DenseNet");
  const Eigen::MatrixXd& last = tape.outputs.back();
  if (upstream.rows() != last.rows() || upstream.cols() != last.cols()) {
    throw std::invalid_argument("upstream gradient shape does not match recorded output");
  }
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    apply_activation_derivative(delta, tape.outputs[l], layer.activation);
    grads.layers_[l].weight.noalias() += delta * tape.inputs[l].transpose();
    grads.layers_[l].bias += delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

std::vector<std::span<double>> DenseNet::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& layer : layers_) {
    blocks.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    blocks.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return blocks;
}

std::vector<std::span<const double>> DenseNet::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const auto& layer : layers_) {
    blocks.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    blocks.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return blocks;
}

bool DenseNet::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

bool DenseNet::same_shape(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != other.layers_[l].weight.rows() ||
        layers_[l].weight.cols() != other.layers_[l].weight.cols()) {
      return false;
    }
  }
  return true;
}

Adam::Adam(AdamConfig config, const std::vector<std::size_t>& block_sizes) : config_(config) {
  for (std::size_t n : block_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

StepReport Adam::step(const std::vector<std::span<double>>& params,
                      const std::vector<std::span<double>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam: block count does not match optimizer state");
  }
  for (std::size_t b = 0; b < m_.size(); ++b) {
    if (params[b].size() != m_[b].size() || grads[b].size() != m_[b].size()) {
      std::ostringstream msg;
      msg << "Adam: block " << b << " has size " << params[b].size() << "/" << grads[b].size()
          << ", optimizer state expects " << m_[b].size();
      throw std::invalid_argument(msg.str());
    }
  }
  for (std::size_t b = 0; b < grads.size(); ++b) {
    for (std::size_t i = 0; i < grads[b].size(); ++i) {
      if (!std::isfinite(grads[b][i])) {
        std::ostringstream msg;
        msg << "non-finite gradient in block " << b << " at index " << i << " (value "
            << grads[b][i] << "); step " << step_count_ + 1 << " rejected";
        return {false, msg.str()};
      }
    }
  }

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double g = grads[b][i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[b][i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
  return {};
}

std::vector<std::size_t> block_sizes(const std::vector<std::span<double>>& blocks) {
  std::vector<std::size_t> sizes;
  sizes.reserve(blocks.size());
  for (const auto& b : blocks) sizes.push_back(b.size());
  return sizes;
}

}  // namespace latf::nn
