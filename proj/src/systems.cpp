#include "latf/systems.hpp"

#include "binary_io.hpp"
#include "latf/hash.hpp"
#include "latf/three_hole_constants.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace latf::sim {

void Trajectory::append(std::span<const double> frame) {
  if (frame_dim == 0) frame_dim = frame.size();
  if (frame.size() != frame_dim) throw std::invalid_argument("Trajectory frames must share one dimension");
  values.insert(values.end(), frame.begin(), frame.end());
}

namespace {

constexpr char kTrajectoryMagic[8] = {'L', 'A', 'T', 'F', 'T', 'R', 'J', '\0'};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open trajectory file for writing: " + path.string());
  out.write(kTrajectoryMagic, sizeof kTrajectoryMagic);
  detail::write_le<std::uint32_t>(out, kTrajectoryVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(trajectory.system_id.size()));
  out.write(trajectory.system_id.data(), static_cast<std::streamsize>(trajectory.system_id.size()));
  detail::write_le<std::uint64_t>(out, trajectory.frame_dim);
  detail::write_le<std::uint64_t>(out, trajectory.frame_count());
  detail::write_le<double>(out, trajectory.temperature);
  detail::write_le<std::uint64_t>(out, trajectory.config_hash);
  detail::write_le_doubles(out, trajectory.values);
  if (!out) throw std::runtime_error("failed writing trajectory file: " + path.string());

  std::ofstream meta(path.string() + ".meta", std::ios::trunc);
  meta << "format = latf-trajectory\n"
       << "version = " << kTrajectoryVersion << "\n"
       << "system = " << trajectory.system_id << "\n"
       << "frame_dim = " << trajectory.frame_dim << "\n"
       << "frame_count = " << trajectory.frame_count() << "\n"
       << "temperature = " << format_double(trajectory.temperature) << "\n"
       << "config_hash = " << hex64(trajectory.config_hash) << "\n"
       << "rejected_frames = " << trajectory.rejected_frames << "\n"
       << "content_hash = " << hex64(fnv1a64(std::span<const double>(trajectory.values))) << "\n";
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trajectory file: " + path.string());
  detail::LittleEndianReader reader(in, "trajectory " + path.string());
  const std::string magic = reader.read_string(sizeof kTrajectoryMagic);
  if (magic != std::string(kTrajectoryMagic, sizeof kTrajectoryMagic)) reader.fail("bad magic");
  const auto version = reader.read<std::uint32_t>();
  if (version != kTrajectoryVersion) reader.fail("unsupported version " + std::to_string(version));
  const auto id_len = reader.read<std::uint32_t>();
  if (id_len > 4096) reader.fail("implausible system id length");
  Trajectory t;
  t.system_id = reader.read_string(id_len);
  t.frame_dim = reader.read<std::uint64_t>();
  const auto count = reader.read<std::uint64_t>();
  t.temperature = reader.read<double>();
  t.config_hash = reader.read<std::uint64_t>();
  if (t.frame_dim == 0 && count != 0) reader.fail("zero frame dimension with nonzero frame count");
  if (count > 0 && t.frame_dim > (std::uint64_t{1} << 40) / count) reader.fail("implausible frame block size");
  t.values.resize(t.frame_dim * count);
  reader.read_doubles(t.values);
  if (in.peek() != std::char_traits<char>::eof()) reader.fail("trailing bytes after frame block");

  std::ifstream meta(path.string() + ".meta");
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos && line.substr(0, eq) == "rejected_frames") {
      t.rejected_frames = std::stoull(line.substr(eq + 3));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

double three_hole_energy(double x, double y) {
  double v = 0.0;
  for (const auto& term : three_hole::kTerms) {
    const double dx = x - term.center_x;
    const double dy = y - term.center_y;
    v += term.amplitude * std::exp(-dx * dx - dy * dy);
  }
  const double yq = y - three_hole::kQuarticCenterY;
  return v + three_hole::kQuartic * (x * x * x * x + yq * yq * yq * yq);
}

Eigen::Vector2d three_hole_gradient(double x, double y) {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (const auto& term : three_hole::kTerms) {
    const double dx = x - term.center_x;
    const double dy = y - term.center_y;
    const double e = term.amplitude * std::exp(-dx * dx - dy * dy);
    g(0) += -2.0 * dx * e;
    g(1) += -2.0 * dy * e;
  }
  const double yq = y - three_hole::kQuarticCenterY;
  g(0) += 4.0 * three_hole::kQuartic * x * x * x;
  g(1) += 4.0 * three_hole::kQuartic * yq * yq * yq;
  return g;
}

ForceField three_hole_force_field() {
  return [](std::span<const double> x, std::span<double> grad) {
    const Eigen::Vector2d g = three_hole_gradient(x[0], x[1]);
    grad[0] = g(0);
    grad[1] = g(1);
    return three_hole_energy(x[0], x[1]);
  };
}

// ---------------------------------------------------------------------------

void LangevinConfig::validate() const {
  if (!(timestep > 0.0)) throw std::invalid_argument("Langevin timestep must be > 0");
  if (!(friction > 0.0)) throw std::invalid_argument("Langevin friction must be > 0");
  if (stride < 1) throw std::invalid_argument("Langevin stride must be >= 1");
  if (n_steps < 0) throw std::invalid_argument("Langevin step count must be >= 0");
  if (!(kT >= 0.0)) throw std::invalid_argument("Langevin kT must be >= 0");
  if (!(mass > 0.0)) throw std::invalid_argument("Langevin mass must be > 0");
}

Trajectory simulate_langevin(const LangevinConfig& config, std::vector<double> x0,
                             const ForceField& force, const LangevinHooks& hooks) {
  config.validate();
  const std::size_t dim = x0.size();
  if (dim == 0) throw std::invalid_argument("Langevin start point is empty");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> x = std::move(x0);
  std::vector<double> v(dim, 0.0);
  std::vector<double> grad(dim, 0.0);
  const double h = config.timestep;
  const double c1 = std::exp(-config.friction * h);
  const double c2 = std::sqrt((1.0 - c1 * c1) * config.kT / config.mass);
  const double inv_m = 1.0 / config.mass;

  // Thermal initial velocities.
  for (auto& vi : v) vi = std::sqrt(config.kT * inv_m) * normal(rng);

  Trajectory traj;
  traj.frame_dim = dim;
  traj.temperature = config.kT;
  traj.values.reserve(static_cast<std::size_t>(config.n_steps / config.stride) * dim);

  auto evaluate = [&](std::int64_t step) {
    force(x, grad);
    for (std::size_t i = 0; i < dim; ++i) {
      if (!std::isfinite(grad[i])) {
        std::ostringstream msg;
        msg << "non-finite force at step " << step << " (frame " << step / config.stride << ")";
        throw std::runtime_error(msg.str());
      }
    }
  };

  evaluate(0);
  for (std::int64_t step = 1; step <= config.n_steps; ++step) {
    for (std::size_t i = 0; i < dim; ++i) {
      v[i] -= 0.5 * h * inv_m * grad[i];  // B
      x[i] += 0.5 * h * v[i];             // A
      v[i] = c1 * v[i] + c2 * normal(rng);  // O
      x[i] += 0.5 * h * v[i];             // A
    }
    evaluate(step);
    for (std::size_t i = 0; i < dim; ++i) v[i] -= 0.5 * h * inv_m * grad[i];  // B
    if (hooks.observer) hooks.observer(step, x, v);
    if (step % config.stride == 0) {
      if (hooks.accept_frame && !hooks.accept_frame(x)) {
        ++traj.rejected_frames;
      } else {
        traj.values.insert(traj.values.end(), x.begin(), x.end());
      }
    }
  }
  return traj;
}

std::uint64_t ThreeHoleConfig::hash() const {
  std::ostringstream s;
  s << "three-hole;v" << three_hole::kConstantsVersion << ";kT=" << format_double(kT)
    << ";friction=" << format_double(friction) << ";timestep=" << format_double(timestep)
    << ";n_steps=" << n_steps << ";stride=" << stride << ";seed=" << seed
    << ";x0=" << format_double(x0) << ";y0=" << format_double(y0);
  return fnv1a64(s.str());
}

Trajectory simulate_three_hole(const ThreeHoleConfig& config) {
  LangevinConfig lc;
  lc.kT = config.kT;
  lc.friction = config.friction;
  lc.timestep = config.timestep;
  lc.n_steps = config.n_steps;
  lc.stride = config.stride;
  lc.seed = config.seed;
  Trajectory t = simulate_langevin(lc, {config.x0, config.y0}, three_hole_force_field());
  t.system_id = "three-hole";
  t.config_hash = config.hash();
  return t;
}

// ---------------------------------------------------------------------------

std::uint64_t LJ7Config::hash() const {
  std::ostringstream s;
  s << "lj7;n=" << n_particles << ";T=" << format_double(temperature)
    << ";friction=" << format_double(friction) << ";timestep=" << format_double(timestep)
    << ";n_steps=" << n_steps << ";stride=" << stride << ";seed=" << seed
    << ";confine=" << format_double(confinement_radius) << "," << format_double(confinement_k)
    << ";evaporate=" << format_double(evaporation_radius);
  return fnv1a64(s.str());
}

double lj_cluster_energy(std::span<const double> coords, std::span<double> grad, const LJ7Config& config) {
  const std::size_t n = coords.size() / 2;
  std::fill(grad.begin(), grad.end(), 0.0);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = coords[2 * i] - coords[2 * j];
      const double dy = coords[2 * i + 1] - coords[2 * j + 1];
      const double r2 = dx * dx + dy * dy;
      const double inv6 = 1.0 / (r2 * r2 * r2);
      energy += 4.0 * (inv6 * inv6 - inv6);
      // dU/dr * (1/r) = (-48 r^-12 + 24 r^-6) / r^2
      const double f = (-48.0 * inv6 * inv6 + 24.0 * inv6) / r2;
      grad[2 * i] += f * dx;
      grad[2 * i + 1] += f * dy;
      grad[2 * j] -= f * dx;
      grad[2 * j + 1] -= f * dy;
    }
  }
  if (config.confinement_k > 0.0) {
    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cx += coords[2 * i];
      cy += coords[2 * i + 1];
    }
    cx /= n;
    cy /= n;
    // Restraint gradient w.r.t. x_j includes the centroid's dependence on x_j.
    double sum_gx = 0.0;
    double sum_gy = 0.0;
    std::vector<double> gx(n, 0.0);
    std::vector<double> gy(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = coords[2 * i] - cx;
      const double dy = coords[2 * i + 1] - cy;
      const double r = std::sqrt(dx * dx + dy * dy);
      if (r > config.confinement_radius) {
        const double excess = r - config.confinement_radius;
        energy += 0.5 * config.confinement_k * excess * excess;
        gx[i] = config.confinement_k * excess * dx / r;
        gy[i] = config.confinement_k * excess * dy / r;
        sum_gx += gx[i];
        sum_gy += gy[i];
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      grad[2 * j] += gx[j] - sum_gx / n;
      grad[2 * j + 1] += gy[j] - sum_gy / n;
    }
  }
  return energy;
}

ForceField lj_cluster_force_field(const LJ7Config& config) {
  return [config](std::span<const double> x, std::span<double> grad) {
    return lj_cluster_energy(x, grad, config);
  };
}

std::vector<double> hexagon_configuration(double spacing) {
  std::vector<double> coords{0.0, 0.0};
  for (int k = 0; k < 6; ++k) {
    const double angle = k * M_PI / 3.0;
    coords.push_back(spacing * std::cos(angle));
    coords.push_back(spacing * std::sin(angle));
  }
  return coords;
}

MinimizeResult minimize_energy(std::vector<double> coords, const ForceField& force,
                               double gradient_tolerance, int max_iterations) {
  // FIRE (Bitzek et al. 2006) with unit masses.
  const std::size_t dim = coords.size();
  std::vector<double> grad(dim, 0.0);
  std::vector<double> v(dim, 0.0);
  double dt = 1e-3;
  const double dt_max = 0.05;
  double alpha = 0.1;
  int since_negative = 0;

  MinimizeResult result;
  double energy = force(coords, grad);
  for (int it = 0; it < max_iterations; ++it) {
    double gnorm2 = 0.0;
    for (double g : grad) gnorm2 += g * g;
    result.iterations = it;
    if (std::sqrt(gnorm2) < gradient_tolerance) break;

    double power = 0.0;
    double vnorm2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      power += -grad[i] * v[i];
      vnorm2 += v[i] * v[i];
    }
    if (power > 0.0) {
      const double scale = std::sqrt(vnorm2 / gnorm2);
      for (std::size_t i = 0; i < dim; ++i) v[i] = (1.0 - alpha) * v[i] - alpha * scale * grad[i];
      if (++since_negative > 5) {
        dt = std::min(dt * 1.1, dt_max);
        alpha *= 0.99;
      }
    } else {
      std::fill(v.begin(), v.end(), 0.0);
      dt *= 0.5;
      alpha = 0.1;
      since_negative = 0;
    }
    // Semi-implicit Euler step.
    for (std::size_t i = 0; i < dim; ++i) v[i] -= dt * grad[i];
    for (std::size_t i = 0; i < dim; ++i) coords[i] += dt * v[i];
    energy = force(coords, grad);
  }
  double gnorm2 = 0.0;
  for (double g : grad) gnorm2 += g * g;
  result.coords = std::move(coords);
  result.energy = energy;
  result.gradient_norm = std::sqrt(gnorm2);
  return result;
}

Trajectory simulate_lj7(const LJ7Config& config) {
  if (config.n_particles < 2) throw std::invalid_argument("LJ cluster needs at least two particles");
  std::vector<double> start;
  if (config.n_particles == 7) {
    start = hexagon_configuration(std::pow(2.0, 1.0 / 6.0));
  } else {
    // Particles on a small spiral for non-benchmark sizes.
    for (int i = 0; i < config.n_particles; ++i) {
      const double r = 0.6 * std::sqrt(static_cast<double>(i));
      const double a = 2.39996 * i;
      start.push_back(r * std::cos(a));
      start.push_back(r * std::sin(a));
    }
  }
  const ForceField force = lj_cluster_force_field(config);
  start = minimize_energy(start, force, 1e-8).coords;

  LangevinConfig lc;
  lc.kT = config.temperature;
  lc.friction = config.friction;
  lc.timestep = config.timestep;
  lc.n_steps = config.n_steps;
  lc.stride = config.stride;
  lc.seed = config.seed;

  LangevinHooks hooks;
  const double evap2 = config.evaporation_radius * config.evaporation_radius;
  hooks.accept_frame = [evap2](std::span<const double> x) {
    const std::size_t n = x.size() / 2;
    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cx += x[2 * i];
      cy += x[2 * i + 1];
    }
    cx /= n;
    cy /= n;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = x[2 * i] - cx;
      const double dy = x[2 * i + 1] - cy;
      if (dx * dx + dy * dy > evap2) return false;
    }
    return true;
  };
  Trajectory t = simulate_langevin(lc, start, force, hooks);
  t.system_id = "lj7";
  t.config_hash = config.hash();
  return t;
}

// ---------------------------------------------------------------------------

std::vector<double> coordination_numbers(std::span<const double> frame, double r0) {
  const std::size_t n = frame.size() / 2;
  std::vector<double> c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = frame[2 * i] - frame[2 * j];
      const double dy = frame[2 * i + 1] - frame[2 * j + 1];
      const double q2 = (dx * dx + dy * dy) / (r0 * r0);
      const double q8 = q2 * q2 * q2 * q2;
      // (1 - q^8) / (1 - q^16) == 1 / (1 + q^8), without the removable singularity at q = 1.
      const double s = 1.0 / (1.0 + q8);
      c[i] += s;
      c[j] += s;
    }
  }
  return c;
}

LJ7Features lj7_features(std::span<const double> frame, double r0) {
  LJ7Features f;
  f.coordination = coordination_numbers(frame, r0);
  std::sort(f.coordination.begin(), f.coordination.end(), std::greater<>());
  const double n = static_cast<double>(f.coordination.size());
  const double mean = std::accumulate(f.coordination.begin(), f.coordination.end(), 0.0) / n;
  for (double c : f.coordination) {
    const double d = c - mean;
    f.mu2 += d * d;
    f.mu3 += d * d * d;
  }
  f.mu2 /= n;
  f.mu3 /= n;
  return f;
}

std::vector<LJ7Features> lj7_features(const Trajectory& trajectory, double r0) {
  std::vector<LJ7Features> out;
  out.reserve(trajectory.frame_count());
  for (std::size_t i = 0; i < trajectory.frame_count(); ++i) out.push_back(lj7_features(trajectory.frame(i), r0));
  return out;
}

Eigen::MatrixXd coordination_matrix(const std::vector<LJ7Features>& features) {
  if (features.empty()) return {};
  const auto n = static_cast<Eigen::Index>(features.front().coordination.size());
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (Eigen::Index k = 0; k < n; ++k) m(k, static_cast<Eigen::Index>(i)) = features[i].coordination[k];
  }
  return m;
}

Eigen::MatrixXd moment_matrix(const std::vector<LJ7Features>& features) {
  Eigen::MatrixXd m(2, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = features[i].mu2;
    m(1, static_cast<Eigen::Index>(i)) = features[i].mu3;
  }
  return m;
}

// ---------------------------------------------------------------------------

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iterations) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw std::invalid_argument("k-means needs k >= 1");
  if (n < k) throw std::invalid_argument("k-means needs at least k points");
  if (!points.allFinite()) throw std::invalid_argument("k-means points must be finite");

  std::mt19937_64 rng(seed);
  KMeansResult result;
  result.centroids.resize(points.rows(), k);

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  result.centroids.col(0) = points.col(pick(rng));
  Eigen::VectorXd nearest = (points.colwise() - result.centroids.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unit(0.0, total);
      double target = unit(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= nearest(chosen);
        if (target <= 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    result.centroids.col(c) = points.col(chosen);
    nearest = nearest.cwiseMin((points.colwise() - result.centroids.col(c)).colwise().squaredNorm().transpose());
  }

  result.labels.assign(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd dist(n);
  for (int it = 0; it < max_iterations; ++it) {
    result.iterations = it + 1;
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points.col(i) - result.centroids.col(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist(i) = best_d;
      if (result.labels[static_cast<std::size_t>(i)] != best) {
        result.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(result.labels[static_cast<std::size_t>(i)]) += points.col(i);
      ++counts[static_cast<std::size_t>(result.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        result.centroids.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        result.centroids.col(c) = points.col(far);
        dist(far) = 0.0;
        ++result.reseeded_clusters;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return result;
}

std::vector<int> kmeans_labels(const Eigen::MatrixXd& points, int k, std::uint64_t seed) {
  return kmeans(points, k, seed).labels;
}

}  // namespace latf::sim
