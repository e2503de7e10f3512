#include "latf/flow.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace latf::flow {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

void scatter_rows(Eigen::MatrixXd& m, const std::vector<int>& rows, const Eigen::MatrixXd& values) {
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(rows[i]) = values.row(static_cast<Eigen::Index>(i));
}

void add_rows(Eigen::MatrixXd& m, const std::vector<int>& rows, const Eigen::MatrixXd& values) {
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(rows[i]) += values.row(static_cast<Eigen::Index>(i));
}

Eigen::MatrixXd clamp_scale(const Eigen::MatrixXd& raw) {
  return (kScaleClamp * (raw.array() / kScaleClamp).tanh()).matrix();
}

void check_scale(const Eigen::MatrixXd& s, std::size_t layer) {
  if (!s.allFinite()) {
    throw std::runtime_error("coupling layer " + std::to_string(layer) + ": non-finite scale output");
  }
}

}  // namespace

FlowModel::FlowModel(int dim, int n_layers, const std::vector<int>& hidden, std::mt19937_64& rng,
                     FlowInit init)
    : dim_(dim) {
  if (dim < 2) throw std::invalid_argument("coupling flow needs a latent dimension >= 2");
  if (n_layers < 0) throw std::invalid_argument("negative coupling layer count");
  for (int k = 0; k < n_layers; ++k) {
    CouplingLayer layer;
    layer.parity = k % 2;
    const int n_fixed = static_cast<int>(fixed_channels(layer.parity).size());
    const int n_updated = dim - n_fixed;
    std::vector<int> widths{n_fixed};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(n_updated);
    layer.scale = nn::DenseNet(widths, nn::Activation::tanh, nn::Activation::identity);
    layer.shift = nn::DenseNet(widths, nn::Activation::tanh, nn::Activation::identity);
    layer.scale.init_fan_in(rng);
    layer.shift.init_fan_in(rng);
    if (init == FlowInit::identity) {
      layer.scale.zero_last_layer();
      layer.shift.zero_last_layer();
    }
    layers_.push_back(std::move(layer));
  }
}

void FlowModel::append_identity_layer(const std::vector<int>& hidden) {
  CouplingLayer layer;
  layer.parity = layers_.empty() ? 0 : 1 - layers_.back().parity;
  const int n_fixed = static_cast<int>(fixed_channels(layer.parity).size());
  std::vector<int> widths{n_fixed};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dim_ - n_fixed);
  layer.scale = nn::DenseNet(widths, nn::Activation::tanh, nn::Activation::identity);
  layer.shift = nn::DenseNet(widths, nn::Activation::tanh, nn::Activation::identity);
  layers_.push_back(std::move(layer));
}

std::vector<int> FlowModel::fixed_channels(int parity) const {
  const int half = dim_ / 2;
  std::vector<int> out;
  if (parity == 0) {
    for (int i = 0; i < half; ++i) out.push_back(i);
  } else {
    for (int i = half; i < dim_; ++i) out.push_back(i);
  }
  return out;
}

std::vector<int> FlowModel::updated_channels(int parity) const {
  return fixed_channels(1 - parity);
}

FlowResult FlowModel::forward_batch(const Eigen::MatrixXd& u, FlowTape* tape) const {
  if (u.rows() != dim_) throw std::invalid_argument("flow input dimension mismatch");
  FlowResult result{u, Eigen::VectorXd::Zero(u.cols())};
  if (tape != nullptr) tape->layers.assign(layers_.size(), {});
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    const auto fixed = fixed_channels(layer.parity);
    const auto updated = updated_channels(layer.parity);
    const Eigen::MatrixXd x_fixed = gather_rows(result.points, fixed);
    nn::Tape* scale_tape = tape ? &tape->layers[k].scale_tape : nullptr;
    nn::Tape* shift_tape = tape ? &tape->layers[k].shift_tape : nullptr;
    Eigen::MatrixXd raw = layer.scale.forward_batch(x_fixed, scale_tape);
    Eigen::MatrixXd s = clamp_scale(raw);
    check_scale(s, k);
    const Eigen::MatrixXd t = layer.shift.forward_batch(x_fixed, shift_tape);
    const Eigen::MatrixXd x_upd = gather_rows(result.points, updated);
    if (tape != nullptr) {
      tape->layers[k].input = result.points;
      tape->layers[k].raw_scale = raw;
      tape->layers[k].scale = s;
    }
    scatter_rows(result.points, updated, (x_upd.array() * s.array().exp() + t.array()).matrix());
    result.log_det += s.colwise().sum().transpose();
  }
  return result;
}

FlowResult FlowModel::inverse_batch(const Eigen::MatrixXd& z) const {
  if (z.rows() != dim_) throw std::invalid_argument("flow input dimension mismatch");
  FlowResult result{z, Eigen::VectorXd::Zero(z.cols())};
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const auto fixed = fixed_channels(layer.parity);
    const auto updated = updated_channels(layer.parity);
    const Eigen::MatrixXd y_fixed = gather_rows(result.points, fixed);
    const Eigen::MatrixXd s = clamp_scale(layer.scale.forward_batch(y_fixed));
    check_scale(s, k);
    const Eigen::MatrixXd t = layer.shift.forward_batch(y_fixed);
    const Eigen::MatrixXd y_upd = gather_rows(result.points, updated);
    scatter_rows(result.points, updated, ((y_upd - t).array() * (-s.array()).exp()).matrix());
    result.log_det -= s.colwise().sum().transpose();
  }
  return result;
}

std::pair<Eigen::VectorXd, double> FlowModel::forward(const Eigen::VectorXd& u) const {
  Eigen::MatrixXd batch = u;
  FlowResult r = forward_batch(batch);
  return {r.points.col(0), r.log_det(0)};
}

std::pair<Eigen::VectorXd, double> FlowModel::inverse(const Eigen::VectorXd& z) const {
  Eigen::MatrixXd batch = z;
  FlowResult r = inverse_batch(batch);
  return {r.points.col(0), r.log_det(0)};
}

Eigen::MatrixXd FlowModel::backward(const FlowTape& tape, const Eigen::MatrixXd& grad_points,
                                    const Eigen::VectorXd& grad_log_det, FlowModel& grads) const {
  if (tape.layers.size() != layers_.size()) {
    throw std::logic_error("FlowModel::backward called without a recorded forward pass");
  }
  if (grads.layers_.size() != layers_.size()) throw std::invalid_argument("flow gradient buffer shape mismatch");
  Eigen::MatrixXd grad = grad_points;
  const Eigen::RowVectorXd dld = grad_log_det.transpose();
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    const auto& lt = tape.layers[k];
    const auto fixed = fixed_channels(layer.parity);
    const auto updated = updated_channels(layer.parity);
    const Eigen::MatrixXd x_upd = gather_rows(lt.input, updated);
    const Eigen::MatrixXd dy_upd = gather_rows(grad, updated);
    const Eigen::ArrayXXd exp_s = lt.scale.array().exp();

    Eigen::MatrixXd ds = (dy_upd.array() * x_upd.array() * exp_s).matrix();
    ds.rowwise() += dld;
    const Eigen::MatrixXd draw =
        (ds.array() * (1.0 - (lt.scale.array() / kScaleClamp).square())).matrix();

    const Eigen::MatrixXd dx_fixed_scale = layer.scale.backward(lt.scale_tape, draw, grads.layers_[k].scale);
    const Eigen::MatrixXd dx_fixed_shift = layer.shift.backward(lt.shift_tape, dy_upd, grads.layers_[k].shift);

    scatter_rows(grad, updated, (dy_upd.array() * exp_s).matrix());
    add_rows(grad, fixed, dx_fixed_scale + dx_fixed_shift);
  }
  return grad;
}

std::vector<std::span<double>> FlowModel::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& layer : layers_) {
    for (auto b : layer.scale.parameter_blocks()) blocks.push_back(b);
    for (auto b : layer.shift.parameter_blocks()) blocks.push_back(b);
  }
  return blocks;
}

std::vector<std::span<const double>> FlowModel::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const auto& layer : layers_) {
    for (auto b : layer.scale.parameter_blocks()) blocks.push_back(b);
    for (auto b : layer.shift.parameter_blocks()) blocks.push_back(b);
  }
  return blocks;
}

std::size_t FlowModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.scale.parameter_count() + layer.shift.parameter_count();
  return n;
}

void FlowModel::set_zero() {
  for (auto& layer : layers_) {
    layer.scale.set_zero();
    layer.shift.set_zero();
  }
}

bool FlowModel::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.scale.all_finite() || !layer.shift.all_finite()) return false;
  }
  return true;
}

double latent_log_likelihood(const FlowModel& flow, const prior::TiltedPrior& prior,
                             const Eigen::VectorXd& u) {
  const auto [z, log_det] = flow.forward(u);
  return prior.log_density(z) + log_det;
}

Eigen::VectorXd latent_log_likelihood_batch(const FlowModel& flow, const prior::TiltedPrior& prior,
                                            const Eigen::MatrixXd& u) {
  const FlowResult r = flow.forward_batch(u);
  return prior.log_density_batch(r.points) + r.log_det;
}

}  // namespace latf::flow
