#include "latf/generation.hpp"

#include "latf/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace latf::gen {

GeneratedEnsemble generate(const spib::LatfModel& model, double temperature, std::size_t n, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("generate: temperature must be positive");
  GeneratedEnsemble e;
  e.temperature = temperature;
  e.model_hash = model.parameter_hash();
  const prior::TiltedPrior prior = model.prior(temperature);
  e.prior_points = prior::sample(prior, n, seed);
  e.latent = model.to_latent_space(e.prior_points);
  e.states = model.decode_states(e.prior_points);
  e.log_likelihood = model.log_likelihood(e.latent, temperature);
  return e;
}

std::vector<StateRepresentative> most_likely_per_state(const spib::LatfModel& model,
                                                       const Eigen::MatrixXd& descriptors, double temperature) {
  const Eigen::MatrixXd mu = model.encode_mean(descriptors);
  const flow::FlowResult f = model.to_prior_space(mu);
  const Eigen::VectorXd ll = model.prior(temperature).log_density_batch(f.points) + f.log_det;
  const std::vector<int> states = model.decode_states(f.points);
  std::vector<StateRepresentative> reps(static_cast<std::size_t>(model.n_states));
  for (int s = 0; s < model.n_states; ++s) reps[s].state = s;
  for (std::size_t i = 0; i < states.size(); ++i) {
    StateRepresentative& r = reps[states[i]];
    const double v = ll(static_cast<Eigen::Index>(i));
    if (!r.frame || v > r.log_likelihood) {
      r.frame = i;
      r.log_likelihood = v;
    }
  }
  return reps;
}

std::string to_string(Interpolation kind) { return kind == Interpolation::slerp ? "slerp" : "angle-radius"; }

Interpolation interpolation_from_string(const std::string& name) {
  if (name == "slerp") return Interpolation::slerp;
  if (name == "angle-radius" || name == "angle_radius") return Interpolation::angle_radius;
  throw std::invalid_argument("unknown interpolation kind '" + name + "' (expected slerp or angle-radius)");
}

namespace {

Eigen::VectorXd counterclockwise_normal(const Eigen::VectorXd& a) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(a.size());
  c(0) = -a(1);
  c(1) = a(0);
  if (c.norm() < 1e-12) {
    // a has no component in the first plane; use the first axis it is not parallel to.
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(a.size(), k);
      e -= e.dot(a) * a;
      if (e.norm() > 1e-6) return e.normalized();
    }
  }
  return c.normalized();
}

}  // namespace

Eigen::MatrixXd interpolate_path(const PathSpec& spec) {
  if (spec.waypoints < 2) throw std::invalid_argument("interpolate_path: need at least 2 waypoints");
  if (spec.start.size() != spec.end.size() || spec.start.size() < 2) {
    throw std::invalid_argument("interpolate_path: endpoints must share a dimension >= 2");
  }
  if (!spec.start.allFinite() || !spec.end.allFinite()) {
    throw std::invalid_argument("interpolate_path: endpoints must be finite");
  }
  const Eigen::Index d = spec.start.size();
  const int m = spec.waypoints;
  Eigen::MatrixXd out(d, m);
  const double r0 = spec.start.norm(), r1 = spec.end.norm();

  if (spec.kind == Interpolation::angle_radius) {
    if (d != 2) throw std::invalid_argument("interpolate_path: angle-radius needs 2D endpoints");
    const double t0 = std::atan2(spec.start(1), spec.start(0));
    const double t1 = std::atan2(spec.end(1), spec.end(0));
    double delta = std::remainder(t1 - t0, 2.0 * std::numbers::pi);
    if (delta <= -std::numbers::pi) delta = std::numbers::pi;
    if (spec.arc == Arc::longer) delta += delta > 0.0 ? -2.0 * std::numbers::pi : 2.0 * std::numbers::pi;
    for (int k = 0; k < m; ++k) {
      const double t = static_cast<double>(k) / (m - 1);
      const double theta = t0 + t * delta;
      const double r = r0 + t * (r1 - r0);
      out(0, k) = r * std::cos(theta);
      out(1, k) = r * std::sin(theta);
    }
  } else {
    Eigen::VectorXd a = r0 > 0.0 ? Eigen::VectorXd(spec.start / r0) : Eigen::VectorXd();
    Eigen::VectorXd b = r1 > 0.0 ? Eigen::VectorXd(spec.end / r1) : Eigen::VectorXd();
    if (a.size() == 0) a = b.size() ? b : Eigen::VectorXd::Unit(d, 0);
    if (b.size() == 0) b = a;
    const double cosw = std::clamp(a.dot(b), -1.0, 1.0);
    const double omega = std::acos(cosw);
    Eigen::VectorXd normal;
    bool antipodal = std::numbers::pi - omega < 1e-12;
    if (antipodal) normal = counterclockwise_normal(a);
    for (int k = 0; k < m; ++k) {
      const double t = static_cast<double>(k) / (m - 1);
      Eigen::VectorXd dir;
      if (antipodal) {
        dir = std::cos(std::numbers::pi * t) * a + std::sin(std::numbers::pi * t) * normal;
      } else if (omega < 1e-12) {
        dir = ((1.0 - t) * a + t * b).normalized();
      } else {
        dir = (std::sin((1.0 - t) * omega) * a + std::sin(t * omega) * b) / std::sin(omega);
      }
      out.col(k) = (r0 + t * (r1 - r0)) * dir;
    }
  }
  out.col(0) = spec.start;
  out.col(m - 1) = spec.end;
  return out;
}

Eigen::MatrixXd map_path_to_latent(const spib::LatfModel& model, const Eigen::MatrixXd& waypoints) {
  return model.to_latent_space(waypoints);
}

// ---------------------------------------------------------------------------

struct NearestNeighborIndex::Impl {
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    std::size_t begin = 0, end = 0;  // leaf range into order
  };

  Eigen::MatrixXd points;
  std::vector<std::size_t> order;
  std::vector<Node> nodes;
  static constexpr std::size_t kLeaf = 16;

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({});
    if (end - begin <= kLeaf) {
      nodes[id].begin = begin;
      nodes[id].end = end;
      return id;
    }
    int dim = 0;
    double best_spread = -1.0;
    for (Eigen::Index k = 0; k < points.rows(); ++k) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        lo = std::min(lo, points(k, order[i]));
        hi = std::max(hi, points(k, order[i]));
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        dim = static_cast<int>(k);
      }
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       const double va = points(dim, a), vb = points(dim, b);
                       return va < vb || (va == vb && a < b);
                     });
    nodes[id].split_dim = dim;
    nodes[id].split = points(dim, order[mid]);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  void search(int id, const Eigen::VectorXd& q, double& best_d, std::size_t& best_i) const {
    const Node& n = nodes[id];
    if (n.split_dim < 0) {
      for (std::size_t k = n.begin; k < n.end; ++k) {
        const std::size_t i = order[k];
        const double dd = (points.col(i) - q).squaredNorm();
        if (dd < best_d || (dd == best_d && i < best_i)) {
          best_d = dd;
          best_i = i;
        }
      }
      return;
    }
    const double diff = q(n.split_dim) - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best_d, best_i);
    if (diff * diff <= best_d) search(far, q, best_d, best_i);
  }
};

NearestNeighborIndex::NearestNeighborIndex(Eigen::MatrixXd points) : impl_(std::make_unique<Impl>()) {
  if (points.cols() == 0) throw std::invalid_argument("nearest neighbour index: empty point set");
  impl_->points = std::move(points);
  impl_->order.resize(static_cast<std::size_t>(impl_->points.cols()));
  std::iota(impl_->order.begin(), impl_->order.end(), std::size_t{0});
  impl_->build(0, impl_->order.size());
}

NearestNeighborIndex::~NearestNeighborIndex() = default;
NearestNeighborIndex::NearestNeighborIndex(NearestNeighborIndex&&) noexcept = default;
NearestNeighborIndex& NearestNeighborIndex::operator=(NearestNeighborIndex&&) noexcept = default;

std::size_t NearestNeighborIndex::size() const { return impl_->order.size(); }

std::size_t NearestNeighborIndex::nearest(const Eigen::VectorXd& query) const {
  if (query.size() != impl_->points.rows()) throw std::invalid_argument("nearest: query dimension mismatch");
  double best_d = std::numeric_limits<double>::infinity();
  std::size_t best_i = std::numeric_limits<std::size_t>::max();
  impl_->search(0, query, best_d, best_i);
  return best_i;
}

std::vector<std::size_t> NearestNeighborIndex::nearest(const Eigen::MatrixXd& queries) const {
  std::vector<std::size_t> out(static_cast<std::size_t>(queries.cols()));
  for (Eigen::Index j = 0; j < queries.cols(); ++j) out[j] = nearest(Eigen::VectorXd(queries.col(j)));
  return out;
}

std::vector<std::size_t> backmap_nearest(const Eigen::MatrixXd& encoded, const Eigen::MatrixXd& queries) {
  if (encoded.cols() == 0) throw std::invalid_argument("backmap_nearest: empty dataset");
  return NearestNeighborIndex(encoded).nearest(queries);
}

}  // namespace latf::gen
