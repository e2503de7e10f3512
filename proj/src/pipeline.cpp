#include "latf/pipeline.hpp"

#include "latf/hash.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace latf::pipeline {

namespace fs = std::filesystem;

sim::ThreeHoleConfig three_hole_config(const io::RunConfig& config) {
  sim::ThreeHoleConfig c;
  c.kT = config.simulation.kT;
  c.friction = config.simulation.friction.value_or(c.friction);
  c.timestep = config.simulation.timestep.value_or(c.timestep);
  c.n_steps = config.simulation.n_steps.value_or(c.n_steps);
  c.stride = config.simulation.stride.value_or(c.stride);
  c.seed = config.simulation.seed;
  return c;
}

sim::LJ7Config lj7_config(const io::RunConfig& config, double temperature) {
  sim::LJ7Config c;
  c.temperature = temperature;
  c.friction = config.simulation.friction.value_or(c.friction);
  c.timestep = config.simulation.timestep.value_or(c.timestep);
  c.n_steps = config.simulation.n_steps.value_or(c.n_steps);
  c.stride = config.simulation.stride.value_or(c.stride);
  // Seed per temperature so that adding a temperature leaves the others intact.
  c.seed = mix_seed(config.simulation.seed, fnv1a64(io::format_double(temperature)));
  c.confinement_radius = config.simulation.confinement_radius;
  c.confinement_k = config.simulation.confinement_k;
  c.evaporation_radius = config.simulation.evaporation_radius;
  return c;
}

std::vector<sim::Trajectory> simulate(const io::RunConfig& config, int jobs) {
  if (config.system.kind == "three-hole") return {sim::simulate_three_hole(three_hole_config(config))};
  if (config.system.kind == "external") {
    std::vector<sim::Trajectory> out;
    for (const auto& p : config.system.trajectories) out.push_back(sim::read_trajectory(p));
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.temperature < b.temperature; });
    return out;
  }
  std::vector<double> temps = config.simulated_temperatures();
  std::sort(temps.begin(), temps.end());
  std::vector<sim::Trajectory> out(temps.size());
  std::vector<std::exception_ptr> errors(temps.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < temps.size(); i = next++) {
      try {
        out[i] = sim::simulate_lj7(lj7_config(config, temps[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(temps.size())));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Eigen::MatrixXd describe(const sim::Trajectory& trajectory, const std::string& descriptor) {
  if (descriptor == "raw") return trajectory.frames();
  if (descriptor == "xy") {
    if (trajectory.frame_dim != 2) throw std::invalid_argument("xy descriptor needs two-dimensional frames");
    return trajectory.frames();
  }
  if (descriptor == "coordination") return sim::coordination_matrix(sim::lj7_features(trajectory));
  if (descriptor == "moments") return sim::moment_matrix(sim::lj7_features(trajectory));
  throw std::invalid_argument("unknown descriptor '" + descriptor + "'");
}

bool same_temperature(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); }

int find_temperature(const FeatureSet& features, double temperature) {
  for (std::size_t i = 0; i < features.temperatures.size(); ++i) {
    if (same_temperature(features.temperatures[i], temperature)) return static_cast<int>(i);
  }
  return -1;
}

double temperature_tag(const io::RunConfig& config, double temperature) {
  return temperature / config.reference_temperature();
}

namespace {

bool is_training(const io::RunConfig& config, double t) {
  const auto train = config.training_temperatures();
  if (config.system.kind == "external" && config.training.train_temperatures.empty()) return true;
  return std::any_of(train.begin(), train.end(), [&](double x) { return same_temperature(x, t); });
}

}  // namespace

FeatureSet featurize(const io::RunConfig& config, const std::vector<sim::Trajectory>& trajectories) {
  FeatureSet f;
  f.descriptor = config.featurize.descriptor;
  std::vector<std::size_t> train;
  Eigen::Index train_cols = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    f.temperatures.push_back(trajectories[i].temperature);
    f.descriptors.push_back(describe(trajectories[i], f.descriptor));
    if (is_training(config, trajectories[i].temperature)) {
      train.push_back(i);
      train_cols += f.descriptors.back().cols();
    }
  }
  if (train.empty()) throw std::invalid_argument("no trajectory at a training temperature");
  Eigen::MatrixXd pooled(f.descriptors[train[0]].rows(), train_cols);
  Eigen::Index at = 0;
  for (std::size_t i : train) {
    pooled.middleCols(at, f.descriptors[i].cols()) = f.descriptors[i];
    at += f.descriptors[i].cols();
  }
  const sim::KMeansResult km = sim::kmeans(pooled, config.featurize.initial_states, config.featurize.seed);
  f.centroids = km.centroids;
  for (const auto& d : f.descriptors) {
    std::vector<int> labels(d.cols());
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      Eigen::Index best;
      (f.centroids.colwise() - d.col(j)).colwise().squaredNorm().minCoeff(&best);
      labels[j] = static_cast<int>(best);
    }
    f.labels.push_back(std::move(labels));
  }
  return f;
}

spib::PairedDataset training_dataset(const io::RunConfig& config, const FeatureSet& features) {
  std::vector<spib::TrajectoryInput> inputs;
  for (std::size_t i = 0; i < features.temperatures.size(); ++i) {
    if (!is_training(config, features.temperatures[i])) continue;
    spib::TrajectoryInput t;
    t.features = features.descriptors[i];
    t.labels = features.labels[i];
    t.temperature = temperature_tag(config, features.temperatures[i]);
    inputs.push_back(std::move(t));
  }
  if (inputs.empty()) throw std::invalid_argument("no featurized trajectory at a training temperature");
  return spib::pair_dataset(std::move(inputs), config.training.lag, config.training.folds);
}

fs::path trajectory_path(const fs::path& dir, double temperature) {
  return dir / ("traj_T" + io::format_double(temperature) + ".trj");
}

fs::path features_path(const fs::path& dir, double temperature) {
  return dir / ("features_T" + io::format_double(temperature) + ".trj");
}

fs::path labels_path(const fs::path& dir, double temperature) {
  return dir / ("labels_T" + io::format_double(temperature) + ".txt");
}

namespace {

std::vector<fs::path> list_prefixed(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::pair<double, fs::path>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind(prefix, 0) != 0 || e.path().extension() != ".trj") continue;
    const std::string t = name.substr(prefix.size(), name.size() - prefix.size() - 4);
    found.emplace_back(std::stod(t), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

}  // namespace

std::vector<fs::path> list_trajectories(const fs::path& dir) { return list_prefixed(dir, "traj_T"); }

std::vector<sim::Trajectory> read_trajectories(const fs::path& dir) {
  std::vector<sim::Trajectory> out;
  for (const auto& p : list_trajectories(dir)) out.push_back(sim::read_trajectory(p));
  if (out.empty()) throw std::runtime_error("no trajectories in " + dir.string() + " (run simulate first)");
  return out;
}

void write_features(const fs::path& dir, const FeatureSet& features) {
  for (std::size_t i = 0; i < features.temperatures.size(); ++i) {
    sim::Trajectory t;
    t.system_id = "features:" + features.descriptor;
    t.frame_dim = static_cast<std::size_t>(features.descriptors[i].rows());
    t.temperature = features.temperatures[i];
    t.values.assign(features.descriptors[i].data(), features.descriptors[i].data() + features.descriptors[i].size());
    sim::write_trajectory(features_path(dir, t.temperature), t);
    io::write_labels(labels_path(dir, t.temperature), features.labels[i]);
  }
}

FeatureSet read_features(const fs::path& dir) {
  FeatureSet f;
  for (const auto& p : list_prefixed(dir, "features_T")) {
    const sim::Trajectory t = sim::read_trajectory(p);
    const std::string prefix = "features:";
    if (t.system_id.rfind(prefix, 0) != 0) throw std::runtime_error(p.string() + " is not a feature file");
    f.descriptor = t.system_id.substr(prefix.size());
    f.temperatures.push_back(t.temperature);
    f.descriptors.push_back(t.frames());
    f.labels.push_back(io::read_labels(labels_path(dir, t.temperature)));
    if (f.labels.back().size() != t.frame_count()) throw std::runtime_error("label count mismatch for " + p.string());
  }
  if (f.temperatures.empty()) throw std::runtime_error("no features in " + dir.string() + " (run featurize first)");
  return f;
}

}  // namespace latf::pipeline
