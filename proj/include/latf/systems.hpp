#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace latf::sim {

/// Time-ordered frames of equal dimension, stored contiguously frame by frame.
struct Trajectory {
  std::string system_id;
  std::size_t frame_dim = 0;
  double temperature = 1.0;
  std::uint64_t config_hash = 0;
  std::vector<double> values;
  std::size_t rejected_frames = 0;

  std::size_t frame_count() const { return frame_dim == 0 ? 0 : values.size() / frame_dim; }
  std::span<const double> frame(std::size_t i) const {
    return {values.data() + i * frame_dim, frame_dim};
  }
  /// (frame_dim x frame_count) view; column i is frame i.
  Eigen::Map<const Eigen::MatrixXd> frames() const {
    return {values.data(), static_cast<Eigen::Index>(frame_dim),
            static_cast<Eigen::Index>(frame_count())};
  }
  void append(std::span<const double> frame);
};

inline constexpr std::uint32_t kTrajectoryVersion = 1;

/// Binary container (little-endian): magic "LATFTRJ\0", u32 version,
/// u32 id length + id bytes, u64 frame dim, u64 frame count, f64 temperature,
/// u64 config hash, then float64 frames. A "<path>.meta" text sidecar is
/// written alongside.
void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory read_trajectory(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Potentials

double three_hole_energy(double x, double y);
Eigen::Vector2d three_hole_gradient(double x, double y);

/// Returns the potential energy at x and writes its gradient into grad.
using ForceField = std::function<double(std::span<const double> x, std::span<double> grad)>;

ForceField three_hole_force_field();

// ---------------------------------------------------------------------------
// Langevin dynamics

struct LangevinConfig {
  double kT = 1.0;
  double friction = 0.5;
  double timestep = 1e-3;
  std::int64_t n_steps = 0;
  std::int64_t stride = 1;
  std::uint64_t seed = 1;
  double mass = 1.0;

  void validate() const;
};

struct LangevinHooks {
  /// Return false to drop a frame that would otherwise be recorded.
  std::function<bool(std::span<const double> x)> accept_frame;
  /// Called after every step with positions and velocities.
  std::function<void(std::int64_t step, std::span<const double> x, std::span<const double> v)> observer;
};

/// BAOAB Langevin integrator. Records positions every `stride` steps
/// (n_steps / stride frames). Throws if the force becomes non-finite.
Trajectory simulate_langevin(const LangevinConfig& config, std::vector<double> x0,
                             const ForceField& force, const LangevinHooks& hooks = {});

struct ThreeHoleConfig {
  double kT = 1.0;
  double friction = 0.5;
  double timestep = 1e-3;
  std::int64_t n_steps = 50'000'000;
  std::int64_t stride = 50;
  std::uint64_t seed = 1;
  double x0 = -1.048;
  double y0 = -0.042;

  std::uint64_t hash() const;
};

Trajectory simulate_three_hole(const ThreeHoleConfig& config);

// ---------------------------------------------------------------------------
// Two-dimensional Lennard-Jones cluster (epsilon = sigma = m = 1)

struct LJ7Config {
  int n_particles = 7;
  double temperature = 0.2;
  double friction = 0.1;
  double timestep = 0.005;
  std::int64_t n_steps = 10'000'000;
  std::int64_t stride = 100;
  std::uint64_t seed = 1;
  double confinement_radius = 2.0;  // restraint starts beyond this distance from the centroid
  double confinement_k = 10.0;
  double evaporation_radius = 3.0;  // frames with a particle beyond this are rejected

  std::uint64_t hash() const;
};

/// Pair LJ energy plus the half-harmonic centroid restraint. Coordinates are
/// interleaved (x0, y0, x1, y1, ...).
double lj_cluster_energy(std::span<const double> coords, std::span<double> grad, const LJ7Config& config);
ForceField lj_cluster_force_field(const LJ7Config& config);

/// Centred hexagon (one particle in the middle) with the given bond length.
std::vector<double> hexagon_configuration(double spacing);

struct MinimizeResult {
  std::vector<double> coords;
  double energy = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// FIRE minimization down to the given gradient norm.
MinimizeResult minimize_energy(std::vector<double> coords, const ForceField& force,
                               double gradient_tolerance = 1e-10, int max_iterations = 200000);

/// Langevin run seeded from the minimized hexagon.
Trajectory simulate_lj7(const LJ7Config& config);

// ---------------------------------------------------------------------------
// Features

struct LJ7Features {
  std::vector<double> coordination;  // sorted, descending
  double mu2 = 0.0;                  // second central moment of coordination numbers
  double mu3 = 0.0;                  // third central moment
};

inline constexpr double kCoordinationCutoff = 1.5;

/// c_i = sum_{j != i} (1 - (r/r0)^8) / (1 - (r/r0)^16).
std::vector<double> coordination_numbers(std::span<const double> frame, double r0 = kCoordinationCutoff);
LJ7Features lj7_features(std::span<const double> frame, double r0 = kCoordinationCutoff);
std::vector<LJ7Features> lj7_features(const Trajectory& trajectory, double r0 = kCoordinationCutoff);

/// Sorted coordination numbers as columns (n_particles x frames).
Eigen::MatrixXd coordination_matrix(const std::vector<LJ7Features>& features);
/// (mu2, mu3) as columns (2 x frames).
Eigen::MatrixXd moment_matrix(const std::vector<LJ7Features>& features);

// ---------------------------------------------------------------------------
// Initial labels

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;  // dim x k
  int iterations = 0;
  int reseeded_clusters = 0;  // empty clusters moved to the farthest point
};

/// Lloyd's algorithm with k-means++ seeding on the columns of `points`.
/// Deterministic for a fixed seed. An empty cluster is re-seeded at the point
/// farthest from its current centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iterations = 300);
std::vector<int> kmeans_labels(const Eigen::MatrixXd& points, int k, std::uint64_t seed);

}  // namespace latf::sim
