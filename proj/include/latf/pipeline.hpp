#pragma once

#include "latf/io.hpp"
#include "latf/spib.hpp"
#include "latf/systems.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace latf::pipeline {

sim::ThreeHoleConfig three_hole_config(const io::RunConfig& config);
sim::LJ7Config lj7_config(const io::RunConfig& config, double temperature);

/// One trajectory per simulated temperature, in ascending temperature order.
/// External systems read their trajectory files instead.
std::vector<sim::Trajectory> simulate(const io::RunConfig& config, int jobs = 1);

/// Descriptor columns of one trajectory (xy | coordination | moments | raw).
Eigen::MatrixXd describe(const sim::Trajectory& trajectory, const std::string& descriptor);

struct FeatureSet {
  std::string descriptor;
  std::vector<double> temperatures;
  std::vector<Eigen::MatrixXd> descriptors;
  std::vector<std::vector<int>> labels;  // initial k-means labels
  Eigen::MatrixXd centroids;
};

/// Descriptors for every trajectory; k-means centroids are fitted on the
/// training temperatures and every frame is labelled by its nearest centroid.
FeatureSet featurize(const io::RunConfig& config, const std::vector<sim::Trajectory>& trajectories);

/// Frames at the training temperatures, tagged T / T_ref.
spib::PairedDataset training_dataset(const io::RunConfig& config, const FeatureSet& features);

double temperature_tag(const io::RunConfig& config, double temperature);
bool same_temperature(double a, double b);
/// Index of `temperature` in the feature set, or -1.
int find_temperature(const FeatureSet& features, double temperature);

// On-disk layout of a run directory.
std::filesystem::path trajectory_path(const std::filesystem::path& dir, double temperature);
std::filesystem::path features_path(const std::filesystem::path& dir, double temperature);
std::filesystem::path labels_path(const std::filesystem::path& dir, double temperature);

/// Trajectory files of a run directory in ascending temperature order.
std::vector<std::filesystem::path> list_trajectories(const std::filesystem::path& dir);
std::vector<sim::Trajectory> read_trajectories(const std::filesystem::path& dir);

void write_features(const std::filesystem::path& dir, const FeatureSet& features);
FeatureSet read_features(const std::filesystem::path& dir);

}  // namespace latf::pipeline
