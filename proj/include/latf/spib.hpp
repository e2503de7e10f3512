#pragma once

#include "latf/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace latf::spib {

/// Descriptors, initial labels and temperature tag of one trajectory.
struct TrajectoryInput {
  Eigen::MatrixXd features;  // d_in x frames
  std::vector<int> labels;   // one per frame
  double temperature = 1.0;  // tag used by the prior
};

/// Contiguous frame range [begin, end) belonging to one fold of one trajectory.
struct Segment {
  std::size_t trajectory = 0;
  int fold = 0;
  double temperature = 1.0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Frames of all trajectories stored back to back. A pair is (t, t + lag)
/// with both frames inside one segment, so pairs never cross trajectory or
/// fold boundaries. Labels are kept per frame; the target of pair t is
/// labels[t + lag].
class PairedDataset {
 public:
  Eigen::MatrixXd descriptors;      // d_in x frames
  std::vector<int> labels;          // per frame, dense in [0, n_states)
  std::vector<double> temperatures; // per frame
  std::vector<Segment> segments;
  int lag = 1;
  int n_folds = 1;
  int n_states = 0;

  std::size_t frame_count() const { return labels.size(); }
  int input_dim() const { return static_cast<int>(descriptors.rows()); }
  int target(std::size_t t) const { return labels[t + static_cast<std::size_t>(lag)]; }

  /// Source frame index of every pair. validation_fold < 0 selects all pairs;
  /// otherwise `validation` picks that fold or its complement.
  std::vector<std::size_t> pair_sources(int validation_fold = -1, bool validation = false) const;
  std::size_t pair_count() const { return pair_sources().size(); }

  /// Frame indices of the segments in (or outside) a fold.
  std::vector<std::size_t> frames(int validation_fold = -1, bool validation = false) const;
  Eigen::MatrixXd gather(const std::vector<std::size_t>& frames) const;

  /// Distinct temperature tags in ascending order.
  std::vector<double> temperature_tags() const;
};

/// Trajectories are ordered by temperature tag (stable) before concatenation
/// so that the ingestion order does not influence training. Each trajectory
/// is cut into `folds` contiguous segments of near-equal length.
PairedDataset pair_dataset(std::vector<TrajectoryInput> trajectories, int lag, int folds);

/// Remaps labels to dense ids 0..k-1 in order of first appearance of the
/// sorted original ids. Returns k.
int compact_labels(std::vector<int>& labels);

struct Batch {
  Eigen::MatrixXd inputs;            // d_in x B
  std::vector<int> targets;          // B
  std::vector<double> temperatures;  // B
  Eigen::MatrixXd noise;             // d_z x B standard normal draws
};

/// Per-sample means of the loss terms.
struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;   // -log q(y | F(u))
  double log_prior = 0.0;        // log r_T(F(u))
  double log_det = 0.0;          // log |det dF/du|
  double encoder_log_density = 0.0;  // log p(u | X)
};

/// total = reconstruction - beta * (log_prior + log_det - encoder_log_density),
/// with u = mu(X) + sigma * noise. When `grads` is given, exact gradients of
/// `total` are accumulated into it; `train_flow` false skips flow gradients.
LossTerms latf_loss(const LatfModel& model, const Batch& batch, ModelGradients* grads = nullptr,
                    bool train_flow = true);

struct TrainingConfig {
  double beta = 0.01;
  int latent_dim = 2;
  std::vector<int> encoder_hidden{32, 32};
  std::vector<int> decoder_hidden{32, 32};
  int flow_layers = 6;
  std::vector<int> flow_hidden{16, 16};
  int batch_size = 512;
  double learning_rate = 1e-3;
  int stage1_epochs_per_round = 2;
  int max_rounds = 20;
  double relabel_threshold = 0.002;
  double stage1_lr_decay = 0.7;  // learning-rate factor applied after each unconverged round
  int stage2_epochs = 10;
  std::uint64_t seed = 1;
  int vamp_pseudo_inputs = 32;
  int vamp_epochs_per_round = 2;

  int kl_bins = 50;
  double kl_alpha = 1e-10;
  std::size_t kl_samples = 50000;

  std::uint64_t hash() const;
};

struct RelabelReport {
  double changed_fraction = 0.0;
  int states_before = 0;
  int states_after = 0;
  std::vector<int> dropped_states;  // ids before compaction
  bool converged = false;
};

/// Assigns every frame argmax q(y | F(mu(X))), drops states that receive no
/// frame and compacts ids; the decoder's output rows are pruned to match.
/// Throws if only one state survives.
RelabelReport relabel_and_merge(LatfModel& model, PairedDataset& dataset, double threshold = 0.002);

struct EpochMetrics {
  int stage = 1;
  int round = 0;
  int epoch = 0;
  LossTerms train;
  double validation_reconstruction = 0.0;
  int n_states = 0;
  std::int64_t rejected_steps = 0;
};

struct TrainResult {
  LatfModel model;
  std::vector<EpochMetrics> metrics;
  std::vector<double> label_change_trace;
};

/// Fresh model with fan-in initialised nets and no coupling layers.
LatfModel make_model(int input_dim, int n_states, const TrainingConfig& config, int lag,
                     std::uint64_t seed);

/// Stage 1: encoder and decoder under a standard normal prior, alternating
/// epochs with relabel_and_merge until the label change drops below the
/// threshold. Relabels `dataset` in place. Throws on non-convergence.
TrainResult train_stage1(PairedDataset& dataset, const TrainingConfig& config,
                         int validation_fold = -1);

/// Stage 2: adds an identity-initialised flow, sets tau and optimises all
/// components jointly with labels fixed.
TrainResult train_stage2(const LatfModel& stage1, const PairedDataset& dataset,
                         const TrainingConfig& config, double tau, int validation_fold = -1);

/// Both stages.
TrainResult train(PairedDataset& dataset, const TrainingConfig& config, double tau,
                  int validation_fold = -1);

/// Symmetric KL between generated IB samples and stochastic encodings
/// mu + sigma * xi of the reference frames, for each temperature tag present
/// in `frames`. Binning is fixed by the encoded reference points.
std::vector<double> generation_kl(const LatfModel& model, const PairedDataset& dataset,
                                  const std::vector<std::size_t>& frames,
                                  const TrainingConfig& config, std::uint64_t seed);

struct TauCell {
  double tau = 0.0;
  int fold = 0;
  std::vector<double> kl_per_temperature;
  double kl = 0.0;  // mean over temperatures
  double validation_reconstruction = 0.0;
};

struct TauSelection {
  double best_tau = 0.0;
  std::vector<double> tau_grid;
  std::vector<double> mean_kl;    // per tau, mean over folds
  std::vector<double> spread_kl;  // per tau, sample std over folds
  std::vector<TauCell> cells;
  std::vector<double> stage1_kl;  // per fold, frozen-flow model
  /// models[f][i]: fold f, tau_grid[i]; filled when keep_models is set.
  std::vector<std::vector<LatfModel>> models;
  std::vector<LatfModel> stage1_models;
  std::vector<PairedDataset> fold_datasets;  // relabelled per fold
};

/// Trains every (tau, fold) cell. Each fold's stage-1 model is shared by all
/// tau values. Ties in mean KL go to the smaller tau. Folds run on up to
/// `jobs` threads.
TauSelection select_tau(const PairedDataset& dataset, const TrainingConfig& config,
                        const std::vector<double>& tau_grid, int jobs = 1, bool keep_models = false);

/// Training seed of one cross-validation fold.
std::uint64_t fold_seed(std::uint64_t seed, int fold);

/// Index of the smallest mean; ties (within 1e-12 relative) go to the smaller tau.
std::size_t pick_tau(const std::vector<double>& tau_grid, const std::vector<double>& mean_kl);

// ---------------------------------------------------------------------------
// VampPrior baseline

struct VampPriorParams {
  Eigen::MatrixXd pseudo_inputs;  // d_in x m
  Eigen::VectorXd weight_logits;  // m

  Eigen::VectorXd weights() const;
};

struct VampModel {
  EncoderParams encoder;
  DecoderParams decoder;
  VampPriorParams prior;
  double beta = 0.01;
  int lag = 1;
  int n_states = 0;
  int latent_dim = 2;

  /// log r(z) = log sum_j w_j N(z; mu(P_j), sigma^2 I), column-wise.
  Eigen::VectorXd log_prior(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd sample(std::size_t n, std::uint64_t seed) const;
  LatfModel as_latf() const;  // encoder/decoder view with identity flow
};

struct VampGradients {
  nn::DenseNet encoder;
  double log_sigma = 0.0;
  nn::DenseNet decoder;
  Eigen::MatrixXd pseudo_inputs;
  Eigen::VectorXd weight_logits;

  static VampGradients zeros_like(const VampModel& model);
  std::vector<std::span<double>> blocks();
};

std::vector<std::span<double>> vamp_parameter_blocks(VampModel& model);

/// Reconstruction - beta * (log r(z) - log p(z | X)) with z = mu(X) + sigma * noise.
LossTerms vamp_loss(const VampModel& model, const Batch& batch, VampGradients* grads = nullptr);

struct VampTrainResult {
  VampModel model;
  std::vector<EpochMetrics> metrics;
  std::vector<double> label_change_trace;
  std::vector<double> kl_per_temperature;
  double kl = 0.0;
  double validation_reconstruction = 0.0;
};

/// SPIB with the VampPrior, same relabel schedule as stage 1. Relabels
/// `dataset` in place.
VampTrainResult vampprior_baseline_train(PairedDataset& dataset, const TrainingConfig& config,
                                         int validation_fold = -1);

/// Mean reconstruction loss -log q(y | F(mu(X))) over the given pair sources.
double reconstruction_loss(const LatfModel& model, const PairedDataset& dataset,
                           const std::vector<std::size_t>& sources);

}  // namespace latf::spib
