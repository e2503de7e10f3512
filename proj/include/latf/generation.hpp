#pragma once

#include "latf/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace latf::gen {

struct GeneratedEnsemble {
  Eigen::MatrixXd latent;        // IB-space samples, d_z x n
  Eigen::MatrixXd prior_points;  // the prior draws they came from
  std::vector<int> states;       // decoder argmax
  Eigen::VectorXd log_likelihood;
  double temperature = 1.0;
  std::uint64_t model_hash = 0;
};

/// n draws from r_T pushed through the inverse flow and decoded.
GeneratedEnsemble generate(const spib::LatfModel& model, double temperature, std::size_t n, std::uint64_t seed);

struct StateRepresentative {
  int state = 0;
  std::optional<std::size_t> frame;  // empty when no frame decodes to the state
  double log_likelihood = 0.0;
};

/// For every state, the frame with the largest flow log-likelihood among the
/// frames whose encode-mean decodes to that state.
std::vector<StateRepresentative> most_likely_per_state(const spib::LatfModel& model,
                                                       const Eigen::MatrixXd& descriptors,
                                                       double temperature = 1.0);

enum class Interpolation { slerp, angle_radius };
enum class Arc { shorter, longer };

std::string to_string(Interpolation kind);
Interpolation interpolation_from_string(const std::string& name);

struct PathSpec {
  Eigen::VectorXd start;  // prior-space endpoints
  Eigen::VectorXd end;
  int waypoints = 50;
  Interpolation kind = Interpolation::angle_radius;
  Arc arc = Arc::shorter;  // angle-radius only
};

/// Waypoints (d x waypoints) including both endpoints exactly.
///
/// slerp: great-circle direction between the endpoint directions with the
/// radius interpolated linearly. Antipodal endpoints rotate counterclockwise
/// in the plane of the first two coordinates.
///
/// angle_radius (2D): theta and r interpolated linearly and independently;
/// the shorter arc by default, the complementary arc with Arc::longer. A tie
/// (exactly pi apart) takes the counterclockwise arc as the shorter one.
Eigen::MatrixXd interpolate_path(const PathSpec& spec);

/// F^{-1} applied to every waypoint.
Eigen::MatrixXd map_path_to_latent(const spib::LatfModel& model, const Eigen::MatrixXd& waypoints);

/// Exact nearest-neighbour search over the columns of a point set (kd-tree).
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(Eigen::MatrixXd points);
  ~NearestNeighborIndex();
  NearestNeighborIndex(NearestNeighborIndex&&) noexcept;
  NearestNeighborIndex& operator=(NearestNeighborIndex&&) noexcept;

  /// Index of the closest point; ties go to the lowest index.
  std::size_t nearest(const Eigen::VectorXd& query) const;
  std::vector<std::size_t> nearest(const Eigen::MatrixXd& queries) const;
  std::size_t size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Frame index of the Euclidean-nearest encoded point for every query column.
std::vector<std::size_t> backmap_nearest(const Eigen::MatrixXd& encoded, const Eigen::MatrixXd& queries);

}  // namespace latf::gen
