#pragma once

#include "latf/evaluation.hpp"
#include "latf/generation.hpp"
#include "latf/io.hpp"
#include "latf/pipeline.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace latf::analysis {

struct TemperatureKl {
  double temperature = 0.0;
  double tag = 1.0;
  std::size_t frames = 0;
  double kl = 0.0;
};

/// Generation KL of `model` at every temperature of the feature set, each
/// against all frames simulated at that temperature.
std::vector<TemperatureKl> temperature_kl(const io::RunConfig& config, const spib::LatfModel& model,
                                          const pipeline::FeatureSet& features, std::uint64_t seed);

/// Frame labels of every trajectory under the model (argmax decoder at F(mu)).
std::vector<std::vector<int>> assign_trajectories(const spib::LatfModel& model,
                                                  const std::vector<Eigen::MatrixXd>& descriptors);

/// The two most populated states of a label set, most populated first.
std::pair<int, int> dominant_states(const std::vector<std::vector<int>>& labels, int n_states);

struct InterpolatedPath {
  std::string name;                  // angle_radius_shorter | angle_radius_longer | slerp
  Eigen::MatrixXd prior_points;      // d_z x waypoints
  Eigen::MatrixXd latent;            // F^{-1} of the waypoints
  std::vector<std::size_t> frames;   // nearest pooled frame per waypoint
};

struct BasinPaths {
  int source_state = 0;
  int sink_state = 0;
  std::size_t source_frame = 0;  // pooled frame index
  std::size_t sink_frame = 0;
  std::vector<InterpolatedPath> paths;
};

/// Paths between the most likely frames of the two most populated states.
/// `descriptors` are pooled frames; waypoints are backmapped to the nearest
/// encode-mean among them.
BasinPaths basin_paths(const spib::LatfModel& model, const Eigen::MatrixXd& descriptors, double temperature_tag,
                       int waypoints);

struct MicrostateTpt {
  Eigen::MatrixXd centroids;                  // descriptor space, dim x microstates
  std::vector<std::vector<int>> microstates;  // per trajectory
  std::vector<int> macrostate;                // majority model state per microstate
  eval::MarkovModel msm;
  eval::TptResult tpt;
  int source_state = 0;
  int sink_state = 0;
};

/// k-means microstates on the descriptors, an MSM at `lag`, and TPT from the
/// microstates of the most populated model state to those of the second.
MicrostateTpt microstate_tpt(const spib::LatfModel& model, const std::vector<Eigen::MatrixXd>& descriptors,
                             int microstates, int lag, int top_k, std::uint64_t seed);

}  // namespace latf::analysis
