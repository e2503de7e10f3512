#include "latf/spib.hpp"

#include "latf/evaluation.hpp"
#include "latf/generation.hpp"
#include "latf/hash.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace latf::spib {

// ---------------------------------------------------------------------------
// Dataset

std::vector<std::size_t> PairedDataset::pair_sources(int validation_fold, bool validation) const {
  std::vector<std::size_t> out;
  const auto l = static_cast<std::size_t>(lag);
  for (const Segment& s : segments) {
    if (validation_fold >= 0 && (s.fold == validation_fold) != validation) continue;
    for (std::size_t t = s.begin; t + l < s.end; ++t) out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> PairedDataset::frames(int validation_fold, bool validation) const {
  std::vector<std::size_t> out;
  for (const Segment& s : segments) {
    if (validation_fold >= 0 && (s.fold == validation_fold) != validation) continue;
    for (std::size_t t = s.begin; t < s.end; ++t) out.push_back(t);
  }
  return out;
}

Eigen::MatrixXd PairedDataset::gather(const std::vector<std::size_t>& idx) const {
  Eigen::MatrixXd out(descriptors.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = descriptors.col(idx[k]);
  return out;
}

std::vector<double> PairedDataset::temperature_tags() const {
  std::vector<double> tags(temperatures.begin(), temperatures.end());
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  return tags;
}

int compact_labels(std::vector<int>& labels) {
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int& v : labels) v = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), v) - ids.begin());
  return static_cast<int>(ids.size());
}

PairedDataset pair_dataset(std::vector<TrajectoryInput> trajectories, int lag, int folds) {
  if (trajectories.empty()) throw std::invalid_argument("pair_dataset: no trajectories");
  if (lag < 0) throw std::invalid_argument("pair_dataset: lag must be >= 0");
  if (folds < 1) throw std::invalid_argument("pair_dataset: folds must be >= 1");
  const Eigen::Index dim = trajectories.front().features.rows();
  std::size_t total = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const TrajectoryInput& t = trajectories[i];
    if (t.features.rows() != dim) throw std::invalid_argument("pair_dataset: descriptor dimension differs between trajectories");
    if (static_cast<std::size_t>(t.features.cols()) != t.labels.size()) {
      throw std::invalid_argument("pair_dataset: trajectory " + std::to_string(i) + " has " +
                                  std::to_string(t.features.cols()) + " frames but " +
                                  std::to_string(t.labels.size()) + " labels");
    }
    if (!(t.temperature > 0.0)) throw std::invalid_argument("pair_dataset: temperature tags must be positive");
    for (int v : t.labels) {
      if (v < 0) throw std::invalid_argument("pair_dataset: negative label");
    }
    total += t.labels.size();
  }
  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trajectories[a].temperature < trajectories[b].temperature;
  });

  PairedDataset d;
  d.lag = lag;
  d.n_folds = folds;
  d.descriptors.resize(dim, static_cast<Eigen::Index>(total));
  d.labels.reserve(total);
  d.temperatures.reserve(total);
  std::size_t offset = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const TrajectoryInput& t = trajectories[order[rank]];
    const std::size_t n = t.labels.size();
    d.descriptors.middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(n)) = t.features;
    d.labels.insert(d.labels.end(), t.labels.begin(), t.labels.end());
    d.temperatures.insert(d.temperatures.end(), n, t.temperature);
    for (int f = 0; f < folds; ++f) {
      Segment s;
      s.trajectory = rank;
      s.fold = f;
      s.temperature = t.temperature;
      s.begin = offset + n * static_cast<std::size_t>(f) / static_cast<std::size_t>(folds);
      s.end = offset + n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(folds);
      if (s.end - s.begin <= static_cast<std::size_t>(lag)) {
        throw std::invalid_argument("pair_dataset: lag " + std::to_string(lag) + " leaves no pairs in fold " +
                                    std::to_string(f) + " of trajectory " + std::to_string(order[rank]) +
                                    " (" + std::to_string(s.end - s.begin) + " frames)");
      }
      d.segments.push_back(s);
    }
    offset += n;
  }
  d.n_states = compact_labels(d.labels);
  return d;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

class PriorCache {
 public:
  PriorCache(double tau, int dim) : tau_(tau), dim_(dim) {}
  const prior::TiltedPrior& at(double temperature) {
    for (const auto& [t, p] : cache_) {
      if (t == temperature) return p;
    }
    cache_.emplace_back(temperature, prior::TiltedPrior(tau_, dim_, temperature));
    return cache_.back().second;
  }

 private:
  double tau_;
  int dim_;
  std::vector<std::pair<double, prior::TiltedPrior>> cache_;
};

void check_batch(const Batch& batch, int input_dim, int latent_dim, int n_states) {
  const Eigen::Index b = batch.inputs.cols();
  if (b == 0) throw std::invalid_argument("loss: empty batch");
  if (batch.inputs.rows() != input_dim) throw std::invalid_argument("loss: input dimension mismatch");
  if (batch.noise.rows() != latent_dim || batch.noise.cols() != b) throw std::invalid_argument("loss: noise shape mismatch");
  if (static_cast<Eigen::Index>(batch.targets.size()) != b || static_cast<Eigen::Index>(batch.temperatures.size()) != b) {
    throw std::invalid_argument("loss: targets/temperatures size mismatch");
  }
  for (int y : batch.targets) {
    if (y < 0 || y >= n_states) throw std::out_of_range("loss: target state " + std::to_string(y) + " out of range");
  }
}

[[noreturn]] void non_finite(const char* what, const LossTerms& t) {
  std::ostringstream msg;
  msg.precision(10);
  msg << what << ": non-finite loss (reconstruction " << t.reconstruction << ", log prior " << t.log_prior
      << ", log det " << t.log_det << ", encoder log density " << t.encoder_log_density << ")";
  throw std::runtime_error(msg.str());
}

/// Cross-entropy of the decoder at z; writes dL/dlogits scaled by `scale`.
double cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& targets, double scale,
                     Eigen::MatrixXd* dlogits) {
  const Eigen::MatrixXd lsm = log_softmax(logits);
  double total = 0.0;
  for (Eigen::Index j = 0; j < lsm.cols(); ++j) total -= lsm(targets[j], j);
  if (dlogits) {
    *dlogits = lsm.array().exp().matrix();
    for (Eigen::Index j = 0; j < lsm.cols(); ++j) (*dlogits)(targets[j], j) -= 1.0;
    *dlogits *= scale;
  }
  return total;
}

}  // namespace

LossTerms latf_loss(const LatfModel& model, const Batch& batch, ModelGradients* grads, bool train_flow) {
  check_batch(batch, model.input_dim(), model.latent_dim, model.n_states);
  const Eigen::Index b = batch.inputs.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double beta = model.beta;
  const double sigma = model.encoder.sigma();
  const int d = model.latent_dim;

  nn::Tape enc_tape, dec_tape;
  flow::FlowTape flow_tape;
  const bool has_flow = model.flow.layer_count() > 0;
  const Eigen::MatrixXd mu = model.encoder.mean_net.forward_batch(batch.inputs, grads ? &enc_tape : nullptr);
  const Eigen::MatrixXd u = mu + sigma * batch.noise;
  flow::FlowResult fr = has_flow ? model.flow.forward_batch(u, grads ? &flow_tape : nullptr)
                                 : flow::FlowResult{u, Eigen::VectorXd::Zero(b)};
  const Eigen::MatrixXd& z = fr.points;
  const Eigen::MatrixXd logits = model.decoder.logits_net.forward_batch(z, grads ? &dec_tape : nullptr);

  Eigen::MatrixXd dlogits;
  LossTerms t;
  t.reconstruction = cross_entropy(logits, batch.targets, inv_b, grads ? &dlogits : nullptr) * inv_b;

  PriorCache priors(model.tau, d);
  Eigen::MatrixXd dz_prior(d, b);
  double log_prior = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const prior::TiltedPrior& p = priors.at(batch.temperatures[j]);
    const Eigen::VectorXd zj = z.col(j);
    log_prior += p.log_density(zj);
    if (grads) dz_prior.col(j) = p.grad_log_density(zj);
  }
  t.log_prior = log_prior * inv_b;
  t.log_det = fr.log_det.mean();
  t.encoder_log_density =
      -0.5 * batch.noise.colwise().squaredNorm().mean() - d * model.encoder.log_sigma - 0.5 * d * kLog2Pi;
  t.total = t.reconstruction - beta * (t.log_prior + t.log_det - t.encoder_log_density);
  if (!std::isfinite(t.total)) non_finite("latf_loss", t);
  if (!grads) return t;

  Eigen::MatrixXd dz = model.decoder.logits_net.backward(dec_tape, dlogits, grads->decoder);
  dz -= (beta * inv_b) * dz_prior;
  Eigen::MatrixXd du;
  if (has_flow) {
    const Eigen::VectorXd dlogdet = Eigen::VectorXd::Constant(b, -beta * inv_b);
    if (train_flow) {
      du = model.flow.backward(flow_tape, dz, dlogdet, grads->flow);
    } else {
      flow::FlowModel scratch = model.flow;
      scratch.set_zero();
      du = model.flow.backward(flow_tape, dz, dlogdet, scratch);
    }
  } else {
    du = dz;
  }
  model.encoder.mean_net.backward(enc_tape, du, grads->encoder);
  grads->log_sigma += (du.array() * batch.noise.array()).sum() * sigma - beta * d;
  return t;
}

// ---------------------------------------------------------------------------
// Configuration and model construction

std::uint64_t TrainingConfig::hash() const {
  std::ostringstream s;
  s.precision(17);
  auto list = [&](const std::vector<int>& v) {
    for (int x : v) s << x << ',';
    s << ';';
  };
  s << beta << ';' << latent_dim << ';';
  list(encoder_hidden);
  list(decoder_hidden);
  s << flow_layers << ';';
  list(flow_hidden);
  s << batch_size << ';' << learning_rate << ';' << stage1_epochs_per_round << ';' << max_rounds << ';'
    << relabel_threshold << ';' << stage2_epochs << ';' << seed << ';' << vamp_pseudo_inputs << ';'
    << vamp_epochs_per_round << ';' << kl_bins << ';' << kl_alpha << ';' << kl_samples << ';' << stage1_lr_decay;
  return fnv1a64(s.str());
}

namespace {

std::vector<int> widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

void validate(const TrainingConfig& c) {
  if (c.latent_dim < 1) throw std::invalid_argument("training: latent_dim must be >= 1");
  if (c.beta < 0.0) throw std::invalid_argument("training: beta must be >= 0");
  if (c.batch_size < 1) throw std::invalid_argument("training: batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
  if (c.max_rounds < 1) throw std::invalid_argument("training: max_rounds must be >= 1");
  if (c.stage1_epochs_per_round < 1) throw std::invalid_argument("training: stage1_epochs_per_round must be >= 1");
  if (c.stage2_epochs < 0) throw std::invalid_argument("training: stage2_epochs must be >= 0");
  if (!(c.stage1_lr_decay > 0.0 && c.stage1_lr_decay <= 1.0))
    throw std::invalid_argument("training: stage1_lr_decay must be in (0, 1]");
}

}  // namespace

LatfModel make_model(int input_dim, int n_states, const TrainingConfig& config, int lag, std::uint64_t seed) {
  validate(config);
  if (n_states < 2) throw std::invalid_argument("make_model: need at least two initial states");
  std::mt19937_64 rng(seed);
  LatfModel m;
  m.latent_dim = config.latent_dim;
  m.beta = config.beta;
  m.lag = lag;
  m.n_states = n_states;
  m.config_hash = config.hash();
  m.encoder.mean_net = nn::DenseNet(widths(input_dim, config.encoder_hidden, config.latent_dim),
                                    nn::Activation::relu, nn::Activation::identity);
  m.encoder.mean_net.init_fan_in(rng);
  m.encoder.log_sigma = 0.0;
  m.decoder.logits_net = nn::DenseNet(widths(config.latent_dim, config.decoder_hidden, n_states),
                                      nn::Activation::relu, nn::Activation::identity);
  m.decoder.logits_net.init_fan_in(rng);
  m.flow = flow::FlowModel();
  m.state_history.push_back(n_states);
  return m;
}

// ---------------------------------------------------------------------------
// Relabelling

namespace {

RelabelReport relabel_impl(const EncoderParams& encoder, const flow::FlowModel& flow, DecoderParams& decoder,
                           int& n_states, std::vector<int>& history, PairedDataset& dataset, double threshold) {
  LatfModel view;
  view.encoder = encoder;
  view.decoder = decoder;
  view.flow = flow;
  view.n_states = n_states;
  view.latent_dim = encoder.mean_net.output_dim();
  const std::vector<int> assigned = view.assign_states(dataset.descriptors);

  RelabelReport r;
  r.states_before = n_states;
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_states), 0);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < assigned.size(); ++i) {
    ++counts[assigned[i]];
    if (assigned[i] != dataset.labels[i]) ++changed;
  }
  r.changed_fraction = assigned.empty() ? 0.0 : static_cast<double>(changed) / static_cast<double>(assigned.size());
  std::vector<int> new_id(static_cast<std::size_t>(n_states), -1);
  std::vector<int> keep;
  for (int s = 0; s < n_states; ++s) {
    if (counts[s] == 0) {
      r.dropped_states.push_back(s);
    } else {
      new_id[s] = static_cast<int>(keep.size());
      keep.push_back(s);
    }
  }
  r.states_after = static_cast<int>(keep.size());
  if (r.states_after < 2) {
    std::ostringstream msg;
    msg << "relabeling collapsed to a single state (beta too large or lag too long); state history:";
    for (int h : history) msg << ' ' << h;
    throw std::runtime_error(msg.str());
  }
  for (std::size_t i = 0; i < assigned.size(); ++i) dataset.labels[i] = new_id[assigned[i]];
  dataset.n_states = r.states_after;
  if (!r.dropped_states.empty()) {
    nn::DenseLayer& last = decoder.logits_net.layers().back();
    Eigen::MatrixXd w(static_cast<Eigen::Index>(keep.size()), last.weight.cols());
    Eigen::VectorXd bias(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      w.row(static_cast<Eigen::Index>(k)) = last.weight.row(keep[k]);
      bias(static_cast<Eigen::Index>(k)) = last.bias(keep[k]);
    }
    last.weight = std::move(w);
    last.bias = std::move(bias);
  }
  n_states = r.states_after;
  history.push_back(n_states);
  r.converged = r.changed_fraction < threshold;
  return r;
}

Batch make_batch(const PairedDataset& data, const std::vector<std::size_t>& sources, std::size_t begin,
                 std::size_t end, int latent_dim, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(end - begin);
  Batch b;
  b.inputs.resize(data.descriptors.rows(), n);
  b.targets.resize(static_cast<std::size_t>(n));
  b.temperatures.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t t = sources[begin + static_cast<std::size_t>(k)];
    b.inputs.col(k) = data.descriptors.col(static_cast<Eigen::Index>(t));
    b.targets[k] = data.target(t);
    b.temperatures[k] = data.temperatures[t];
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  b.noise.resize(latent_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < latent_dim; ++i) b.noise(i, j) = normal(rng);
  }
  return b;
}

void accumulate(LossTerms& acc, const LossTerms& t, double w) {
  acc.total += w * t.total;
  acc.reconstruction += w * t.reconstruction;
  acc.log_prior += w * t.log_prior;
  acc.log_det += w * t.log_det;
  acc.encoder_log_density += w * t.encoder_log_density;
}

/// One pass over shuffled sources. `step` computes the loss, fills gradients
/// and applies the optimizer; it returns false when the step was rejected.
template <typename Step>
LossTerms run_epoch(const PairedDataset& data, std::vector<std::size_t> sources, int batch_size, int latent_dim,
                    std::mt19937_64& rng, std::int64_t& rejected, Step&& step) {
  if (sources.empty()) throw std::invalid_argument("training: no training pairs");
  std::shuffle(sources.begin(), sources.end(), rng);
  LossTerms acc;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < sources.size(); begin += bs) {
    const std::size_t end = std::min(sources.size(), begin + bs);
    const Batch batch = make_batch(data, sources, begin, end, latent_dim, rng);
    LossTerms t;
    if (!step(batch, t)) ++rejected;
    accumulate(acc, t, static_cast<double>(end - begin) / static_cast<double>(sources.size()));
  }
  return acc;
}

nn::Adam make_adam(const TrainingConfig& c, const std::vector<std::span<double>>& blocks) {
  nn::AdamConfig ac;
  ac.learning_rate = c.learning_rate;
  return nn::Adam(ac, nn::block_sizes(blocks));
}

}  // namespace

RelabelReport relabel_and_merge(LatfModel& model, PairedDataset& dataset, double threshold) {
  return relabel_impl(model.encoder, model.flow, model.decoder, model.n_states, model.state_history, dataset,
                      threshold);
}

double reconstruction_loss(const LatfModel& model, const PairedDataset& dataset,
                           const std::vector<std::size_t>& sources) {
  if (sources.empty()) return 0.0;
  const Eigen::MatrixXd x = dataset.gather(sources);
  const Eigen::MatrixXd z = model.to_prior_space(model.encode_mean(x)).points;
  std::vector<int> targets(sources.size());
  for (std::size_t k = 0; k < sources.size(); ++k) targets[k] = dataset.target(sources[k]);
  double total = 0.0;
  constexpr Eigen::Index kChunk = 8192;
  for (Eigen::Index b = 0; b < z.cols(); b += kChunk) {
    const Eigen::Index n = std::min(kChunk, z.cols() - b);
    std::vector<int> tt(targets.begin() + b, targets.begin() + b + n);
    total += cross_entropy(model.decoder.logits_net.forward_batch(z.middleCols(b, n)), tt, 1.0, nullptr);
  }
  return total / static_cast<double>(sources.size());
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_stage1(PairedDataset& dataset, const TrainingConfig& config, int validation_fold) {
  validate(config);
  TrainResult result;
  LatfModel& model = result.model;
  model = make_model(dataset.input_dim(), dataset.n_states, config, dataset.lag, mix_seed(config.seed, 11));
  model.temperature_tags = dataset.temperature_tags();
  std::mt19937_64 rng(mix_seed(config.seed, 12));
  const std::vector<std::size_t> train_src = dataset.pair_sources(validation_fold, false);
  const std::vector<std::size_t> val_src =
      validation_fold >= 0 ? dataset.pair_sources(validation_fold, true) : std::vector<std::size_t>{};

  ModelGradients grads = ModelGradients::zeros_like(model);
  nn::Adam adam = make_adam(config, model.parameter_blocks());
  bool converged = false;
  for (int round = 0; round < config.max_rounds && !converged; ++round) {
    for (int e = 0; e < config.stage1_epochs_per_round; ++e) {
      EpochMetrics m;
      m.stage = 1;
      m.round = round;
      m.epoch = e;
      m.train = run_epoch(dataset, train_src, config.batch_size, model.latent_dim, rng, m.rejected_steps,
                          [&](const Batch& batch, LossTerms& t) {
                            grads.set_zero();
                            t = latf_loss(model, batch, &grads);
                            return adam.step(model.parameter_blocks(), grads.blocks()).applied;
                          });
      m.validation_reconstruction = reconstruction_loss(model, dataset, val_src);
      m.n_states = model.n_states;
      result.metrics.push_back(m);
    }
    const RelabelReport r = relabel_and_merge(model, dataset, config.relabel_threshold);
    result.label_change_trace.push_back(r.changed_fraction);
    converged = r.converged;
    const double lr = adam.config().learning_rate * (converged ? 1.0 : config.stage1_lr_decay);
    if (!r.dropped_states.empty()) {
      grads = ModelGradients::zeros_like(model);
      adam = make_adam(config, model.parameter_blocks());
    }
    adam.set_learning_rate(lr);
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "stage 1 did not converge within " << config.max_rounds << " rounds; label-change trace:";
    for (double c : result.label_change_trace) msg << ' ' << c;
    throw std::runtime_error(msg.str());
  }
  return result;
}

TrainResult train_stage2(const LatfModel& stage1, const PairedDataset& dataset, const TrainingConfig& config,
                         double tau, int validation_fold) {
  validate(config);
  if (tau < 0.0) throw std::invalid_argument("train: tau must be >= 0");
  if (stage1.n_states != dataset.n_states) throw std::invalid_argument("train: model and dataset state counts differ");
  TrainResult result;
  LatfModel& model = result.model;
  model = stage1;
  model.tau = tau;
  std::mt19937_64 init_rng(mix_seed(config.seed, 21));
  model.flow = flow::FlowModel(model.latent_dim, config.flow_layers, config.flow_hidden, init_rng,
                               flow::FlowInit::identity);
  std::mt19937_64 rng(mix_seed(config.seed, 22));
  const std::vector<std::size_t> train_src = dataset.pair_sources(validation_fold, false);
  const std::vector<std::size_t> val_src =
      validation_fold >= 0 ? dataset.pair_sources(validation_fold, true) : std::vector<std::size_t>{};
  ModelGradients grads = ModelGradients::zeros_like(model);
  nn::Adam adam = make_adam(config, model.parameter_blocks());
  for (int e = 0; e < config.stage2_epochs; ++e) {
    EpochMetrics m;
    m.stage = 2;
    m.epoch = e;
    m.train = run_epoch(dataset, train_src, config.batch_size, model.latent_dim, rng, m.rejected_steps,
                        [&](const Batch& batch, LossTerms& t) {
                          grads.set_zero();
                          t = latf_loss(model, batch, &grads);
                          return adam.step(model.parameter_blocks(), grads.blocks()).applied;
                        });
    m.validation_reconstruction = reconstruction_loss(model, dataset, val_src);
    m.n_states = model.n_states;
    result.metrics.push_back(m);
  }
  return result;
}

TrainResult train(PairedDataset& dataset, const TrainingConfig& config, double tau, int validation_fold) {
  TrainResult s1 = train_stage1(dataset, config, validation_fold);
  TrainResult s2 = train_stage2(s1.model, dataset, config, tau, validation_fold);
  s1.metrics.insert(s1.metrics.end(), s2.metrics.begin(), s2.metrics.end());
  s2.metrics = std::move(s1.metrics);
  s2.label_change_trace = std::move(s1.label_change_trace);
  return s2;
}

// ---------------------------------------------------------------------------
// Generation divergence and tau selection

namespace {

// Noise stream for the stochastic encodings that serve as the KL reference.
constexpr std::uint64_t kReferenceStream = 0x7265666572656e63ULL;

template <typename Generate>
std::vector<double> kl_by_temperature(const Eigen::MatrixXd& encoded, const PairedDataset& dataset,
                                      const std::vector<std::size_t>& frames, const TrainingConfig& config,
                                      Generate&& generate) {
  std::map<double, std::vector<Eigen::Index>> by_t;
  for (std::size_t k = 0; k < frames.size(); ++k) by_t[dataset.temperatures[frames[k]]].push_back(static_cast<Eigen::Index>(k));
  std::vector<double> out;
  std::uint64_t stream = 0;
  for (const auto& [t, cols] : by_t) {
    Eigen::MatrixXd ref(encoded.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) ref.col(static_cast<Eigen::Index>(k)) = encoded.col(cols[k]);
    const eval::HistogramGrid grid = eval::HistogramGrid::covering(ref, config.kl_bins, 0.05);
    const Eigen::MatrixXd gen = generate(t, stream++);
    out.push_back(eval::symmetric_kl(gen, ref, grid, config.kl_alpha));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<double> generation_kl(const LatfModel& model, const PairedDataset& dataset,
                                  const std::vector<std::size_t>& frames, const TrainingConfig& config,
                                  std::uint64_t seed) {
  if (model.latent_dim != 2) throw std::invalid_argument("generation_kl: histogram metric needs d_z = 2");
  if (frames.empty()) throw std::invalid_argument("generation_kl: no reference frames");
  const Eigen::MatrixXd encoded = model.encode_sample(dataset.gather(frames), mix_seed(seed, kReferenceStream));
  return kl_by_temperature(encoded, dataset, frames, config, [&](double t, std::uint64_t stream) {
    return gen::generate(model, t, config.kl_samples, mix_seed(seed, stream)).latent;
  });
}

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return mix_seed(seed, 100 + static_cast<std::uint64_t>(fold));
}

std::size_t pick_tau(const std::vector<double>& tau_grid, const std::vector<double>& mean_kl) {
  if (tau_grid.empty() || tau_grid.size() != mean_kl.size()) throw std::invalid_argument("pick_tau: grid/KL size mismatch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < tau_grid.size(); ++i) {
    const double a = mean_kl[i], b = mean_kl[best];
    const bool tie = std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
    if ((!tie && a < b) || (tie && tau_grid[i] < tau_grid[best])) best = i;
  }
  return best;
}

TauSelection select_tau(const PairedDataset& dataset, const TrainingConfig& config,
                        const std::vector<double>& tau_grid, int jobs, bool keep_models) {
  if (tau_grid.size() < 2) throw std::invalid_argument("select_tau: need at least two tau values");
  for (double t : tau_grid) {
    if (t < 0.0) throw std::invalid_argument("select_tau: tau values must be >= 0");
  }
  const int folds = dataset.n_folds;
  if (folds < 2) throw std::invalid_argument("select_tau: dataset needs at least two folds");

  TauSelection sel;
  sel.tau_grid = tau_grid;
  std::vector<std::vector<TauCell>> cells(folds);
  std::vector<double> stage1_kl(folds, 0.0);
  std::vector<std::vector<LatfModel>> models(folds);
  std::vector<LatfModel> stage1_models(folds);
  std::vector<PairedDataset> fold_data(folds);
  std::vector<std::exception_ptr> errors(folds);

  auto run_fold = [&](int f) {
    TrainingConfig fc = config;
    fc.seed = fold_seed(config.seed, f);
    PairedDataset data = dataset;
    const TrainResult s1 = train_stage1(data, fc, f);
    const std::vector<std::size_t> val_frames = data.frames(f, true);
    const std::vector<std::size_t> val_src = data.pair_sources(f, true);
    const std::uint64_t kl_seed = mix_seed(fc.seed, 7);
    stage1_kl[f] = mean_of(generation_kl(s1.model, data, val_frames, fc, kl_seed));
    for (double tau : tau_grid) {
      const TrainResult s2 = train_stage2(s1.model, data, fc, tau, f);
      TauCell c;
      c.tau = tau;
      c.fold = f;
      c.kl_per_temperature = generation_kl(s2.model, data, val_frames, fc, kl_seed);
      c.kl = mean_of(c.kl_per_temperature);
      c.validation_reconstruction = reconstruction_loss(s2.model, data, val_src);
      cells[f].push_back(c);
      if (keep_models) models[f].push_back(s2.model);
    }
    if (keep_models) {
      stage1_models[f] = s1.model;
      fold_data[f] = std::move(data);
    }
  };

  const int workers = std::max(1, std::min(jobs, folds));
  if (workers == 1) {
    for (int f = 0; f < folds; ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int f = next++; f < folds; f = next++) {
          try {
            run_fold(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    std::vector<double> v;
    for (int f = 0; f < folds; ++f) v.push_back(cells[f][i].kl);
    sel.mean_kl.push_back(mean_of(v));
    sel.spread_kl.push_back(stddev_of(v));
  }
  for (int f = 0; f < folds; ++f) {
    for (auto& c : cells[f]) sel.cells.push_back(std::move(c));
  }
  sel.best_tau = tau_grid[pick_tau(tau_grid, sel.mean_kl)];
  sel.stage1_kl = std::move(stage1_kl);
  if (keep_models) {
    sel.models = std::move(models);
    sel.stage1_models = std::move(stage1_models);
    sel.fold_datasets = std::move(fold_data);
  }
  return sel;
}

// ---------------------------------------------------------------------------
// VampPrior baseline

Eigen::VectorXd VampPriorParams::weights() const {
  const double m = weight_logits.maxCoeff();
  Eigen::VectorXd w = (weight_logits.array() - m).exp().matrix();
  return w / w.sum();
}

namespace {

/// a(j, b) = log w_j + log N(z_b; m_j, sigma^2 I).
Eigen::MatrixXd component_log_terms(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_w, double log_sigma,
                                    const Eigen::MatrixXd& z) {
  const int d = static_cast<int>(z.rows());
  const double inv_var = std::exp(-2.0 * log_sigma);
  Eigen::MatrixXd a(means.cols(), z.cols());
  const double c = -d * log_sigma - 0.5 * d * kLog2Pi;
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    a.col(b) = (-0.5 * inv_var * (means.colwise() - z.col(b)).colwise().squaredNorm().transpose().array() + c).matrix() +
               log_w;
  }
  return a;
}

Eigen::VectorXd column_logsumexp(const Eigen::MatrixXd& a) {
  Eigen::VectorXd out(a.cols());
  for (Eigen::Index b = 0; b < a.cols(); ++b) {
    const double m = a.col(b).maxCoeff();
    out(b) = m + std::log((a.col(b).array() - m).exp().sum());
  }
  return out;
}

Eigen::VectorXd log_weights(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

}  // namespace

Eigen::VectorXd VampModel::log_prior(const Eigen::MatrixXd& z) const {
  const Eigen::MatrixXd means = encoder.mean_net.forward_batch(prior.pseudo_inputs);
  return column_logsumexp(component_log_terms(means, log_weights(prior.weight_logits), encoder.log_sigma, z));
}

Eigen::MatrixXd VampModel::sample(std::size_t n, std::uint64_t seed) const {
  const Eigen::MatrixXd means = encoder.mean_net.forward_batch(prior.pseudo_inputs);
  const Eigen::VectorXd w = prior.weights();
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(w.data(), w.data() + w.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = encoder.sigma();
  Eigen::MatrixXd out(latent_dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    const int j = pick(rng);
    for (Eigen::Index i = 0; i < latent_dim; ++i) out(i, k) = means(i, j) + sigma * normal(rng);
  }
  return out;
}

LatfModel VampModel::as_latf() const {
  LatfModel m;
  m.encoder = encoder;
  m.decoder = decoder;
  m.beta = beta;
  m.lag = lag;
  m.n_states = n_states;
  m.latent_dim = latent_dim;
  return m;
}

VampGradients VampGradients::zeros_like(const VampModel& model) {
  VampGradients g;
  g.encoder = model.encoder.mean_net;
  g.encoder.set_zero();
  g.decoder = model.decoder.logits_net;
  g.decoder.set_zero();
  g.pseudo_inputs = Eigen::MatrixXd::Zero(model.prior.pseudo_inputs.rows(), model.prior.pseudo_inputs.cols());
  g.weight_logits = Eigen::VectorXd::Zero(model.prior.weight_logits.size());
  return g;
}

std::vector<std::span<double>> VampGradients::blocks() {
  std::vector<std::span<double>> out = encoder.parameter_blocks();
  out.emplace_back(&log_sigma, 1);
  for (auto b : decoder.parameter_blocks()) out.push_back(b);
  out.emplace_back(pseudo_inputs.data(), static_cast<std::size_t>(pseudo_inputs.size()));
  out.emplace_back(weight_logits.data(), static_cast<std::size_t>(weight_logits.size()));
  return out;
}

std::vector<std::span<double>> vamp_parameter_blocks(VampModel& model) {
  std::vector<std::span<double>> out = model.encoder.mean_net.parameter_blocks();
  out.emplace_back(&model.encoder.log_sigma, 1);
  for (auto b : model.decoder.logits_net.parameter_blocks()) out.push_back(b);
  out.emplace_back(model.prior.pseudo_inputs.data(), static_cast<std::size_t>(model.prior.pseudo_inputs.size()));
  out.emplace_back(model.prior.weight_logits.data(), static_cast<std::size_t>(model.prior.weight_logits.size()));
  return out;
}

LossTerms vamp_loss(const VampModel& model, const Batch& batch, VampGradients* grads) {
  check_batch(batch, model.encoder.mean_net.input_dim(), model.latent_dim, model.n_states);
  const Eigen::Index b = batch.inputs.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  const double beta = model.beta;
  const double log_sigma = model.encoder.log_sigma;
  const double sigma = std::exp(log_sigma);
  const double inv_var = 1.0 / (sigma * sigma);
  const int d = model.latent_dim;

  nn::Tape enc_tape, pseudo_tape, dec_tape;
  const Eigen::MatrixXd mu = model.encoder.mean_net.forward_batch(batch.inputs, grads ? &enc_tape : nullptr);
  const Eigen::MatrixXd means = model.encoder.mean_net.forward_batch(model.prior.pseudo_inputs, grads ? &pseudo_tape : nullptr);
  const Eigen::MatrixXd z = mu + sigma * batch.noise;
  const Eigen::MatrixXd logits = model.decoder.logits_net.forward_batch(z, grads ? &dec_tape : nullptr);
  const Eigen::VectorXd log_w = log_weights(model.prior.weight_logits);
  const Eigen::MatrixXd a = component_log_terms(means, log_w, log_sigma, z);
  const Eigen::VectorXd log_r = column_logsumexp(a);

  LossTerms t;
  Eigen::MatrixXd dlogits;
  t.reconstruction = cross_entropy(logits, batch.targets, inv_b, grads ? &dlogits : nullptr) * inv_b;
  t.log_prior = log_r.mean();
  t.encoder_log_density = -0.5 * batch.noise.colwise().squaredNorm().mean() - d * log_sigma - 0.5 * d * kLog2Pi;
  t.total = t.reconstruction - beta * (t.log_prior - t.encoder_log_density);
  if (!std::isfinite(t.total)) non_finite("vamp_loss", t);
  if (!grads) return t;

  const Eigen::Index m = means.cols();
  Eigen::MatrixXd gamma(m, b);
  for (Eigen::Index k = 0; k < b; ++k) gamma.col(k) = (a.col(k).array() - log_r(k)).exp().matrix();

  Eigen::MatrixXd dz = model.decoder.logits_net.backward(dec_tape, dlogits, grads->decoder);
  Eigen::MatrixXd dmeans = Eigen::MatrixXd::Zero(d, m);
  double dlog_sigma_prior = 0.0;
  const double c = -beta * inv_b;  // weight of d(log r_b)
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::MatrixXd diff = means.colwise() - z.col(k);  // m_j - z_b
    const Eigen::VectorXd g = gamma.col(k);
    dz.col(k) += c * inv_var * (diff * g);
    dmeans -= c * inv_var * (diff.array().rowwise() * g.transpose().array()).matrix();
    dlog_sigma_prior += g.dot((diff.colwise().squaredNorm().transpose().array() * inv_var - d).matrix());
  }
  const Eigen::VectorXd w = log_w.array().exp().matrix();
  grads->weight_logits += c * (gamma.rowwise().sum() - static_cast<double>(b) * w);
  model.encoder.mean_net.backward(enc_tape, dz, grads->encoder);
  grads->pseudo_inputs += model.encoder.mean_net.backward(pseudo_tape, dmeans, grads->encoder);
  grads->log_sigma += (dz.array() * batch.noise.array()).sum() * sigma + c * dlog_sigma_prior - beta * d;
  return t;
}

VampTrainResult vampprior_baseline_train(PairedDataset& dataset, const TrainingConfig& config, int validation_fold) {
  validate(config);
  if (config.vamp_pseudo_inputs < 1) throw std::invalid_argument("vampprior: need at least one pseudo-input");
  VampTrainResult result;
  VampModel& model = result.model;
  {
    const LatfModel base =
        make_model(dataset.input_dim(), dataset.n_states, config, dataset.lag, mix_seed(config.seed, 31));
    model.encoder = base.encoder;
    model.decoder = base.decoder;
    model.beta = base.beta;
    model.lag = base.lag;
    model.n_states = base.n_states;
    model.latent_dim = base.latent_dim;
  }
  std::mt19937_64 rng(mix_seed(config.seed, 32));
  const std::vector<std::size_t> train_frames = dataset.frames(validation_fold, false);
  model.prior.pseudo_inputs.resize(dataset.input_dim(), config.vamp_pseudo_inputs);
  std::uniform_int_distribution<std::size_t> pick(0, train_frames.size() - 1);
  for (int j = 0; j < config.vamp_pseudo_inputs; ++j) {
    model.prior.pseudo_inputs.col(j) = dataset.descriptors.col(static_cast<Eigen::Index>(train_frames[pick(rng)]));
  }
  model.prior.weight_logits = Eigen::VectorXd::Zero(config.vamp_pseudo_inputs);

  const std::vector<std::size_t> train_src = dataset.pair_sources(validation_fold, false);
  const std::vector<std::size_t> val_src =
      validation_fold >= 0 ? dataset.pair_sources(validation_fold, true) : std::vector<std::size_t>{};
  VampGradients grads = VampGradients::zeros_like(model);
  nn::Adam adam = make_adam(config, vamp_parameter_blocks(model));
  std::vector<int> history{model.n_states};
  bool converged = false;
  for (int round = 0; round < config.max_rounds && !converged; ++round) {
    for (int e = 0; e < config.vamp_epochs_per_round; ++e) {
      EpochMetrics m;
      m.stage = 1;
      m.round = round;
      m.epoch = e;
      m.train = run_epoch(dataset, train_src, config.batch_size, model.latent_dim, rng, m.rejected_steps,
                          [&](const Batch& batch, LossTerms& t) {
                            grads = VampGradients::zeros_like(model);
                            t = vamp_loss(model, batch, &grads);
                            return adam.step(vamp_parameter_blocks(model), grads.blocks()).applied;
                          });
      m.validation_reconstruction = reconstruction_loss(model.as_latf(), dataset, val_src);
      m.n_states = model.n_states;
      result.metrics.push_back(m);
    }
    const RelabelReport r = relabel_impl(model.encoder, flow::FlowModel(), model.decoder, model.n_states, history,
                                         dataset, config.relabel_threshold);
    result.label_change_trace.push_back(r.changed_fraction);
    converged = r.converged;
    const double lr = adam.config().learning_rate * (converged ? 1.0 : config.stage1_lr_decay);
    if (!r.dropped_states.empty()) adam = make_adam(config, vamp_parameter_blocks(model));
    adam.set_learning_rate(lr);
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "VampPrior baseline did not converge within " << config.max_rounds << " rounds; label-change trace:";
    for (double c : result.label_change_trace) msg << ' ' << c;
    throw std::runtime_error(msg.str());
  }
  if (validation_fold >= 0) {
    const std::vector<std::size_t> val_frames = dataset.frames(validation_fold, true);
    const LatfModel view = model.as_latf();
    const std::uint64_t kl_seed = mix_seed(config.seed, 7);
    const Eigen::MatrixXd encoded = view.encode_sample(dataset.gather(val_frames), mix_seed(kl_seed, kReferenceStream));
    result.kl_per_temperature = kl_by_temperature(encoded, dataset, val_frames, config, [&](double, std::uint64_t s) {
      return model.sample(config.kl_samples, mix_seed(kl_seed, s));
    });
    result.kl = mean_of(result.kl_per_temperature);
    result.validation_reconstruction = reconstruction_loss(view, dataset, val_src);
  }
  return result;
}

}  // namespace latf::spib
