#include "latf/generation.hpp"
#include "latf/spib.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace latf;
using namespace latf::gen;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd polar(double r, double theta) {
  Eigen::VectorXd v(2);
  v << r * std::cos(theta), r * std::sin(theta);
  return v;
}

double angle_of(const Eigen::VectorXd& v) { return std::atan2(v(1), v(0)); }

PathSpec spec(Eigen::VectorXd a, Eigen::VectorXd b, Interpolation kind, Arc arc = Arc::shorter, int n = 50) {
  PathSpec s;
  s.start = std::move(a);
  s.end = std::move(b);
  s.kind = kind;
  s.arc = arc;
  s.waypoints = n;
  return s;
}

spib::LatfModel small_model(int input_dim, std::uint64_t seed) {
  spib::TrainingConfig c;
  c.encoder_hidden = {8};
  c.decoder_hidden = {8};
  c.flow_hidden = {6};
  c.flow_layers = 3;
  spib::LatfModel m = spib::make_model(input_dim, 3, c, 1, seed);
  std::mt19937_64 rng(seed);
  m.flow = flow::FlowModel(2, 3, {6}, rng, flow::FlowInit::random);
  m.tau = 1.5;
  return m;
}

}  // namespace

TEST_CASE("paths include both endpoints exactly") {
  const Eigen::VectorXd a = polar(1.3, 0.4), b = polar(2.1, 2.5);
  for (Interpolation k : {Interpolation::slerp, Interpolation::angle_radius}) {
    for (Arc arc : {Arc::shorter, Arc::longer}) {
      if (k == Interpolation::slerp && arc == Arc::longer) continue;
      const Eigen::MatrixXd p = interpolate_path(spec(a, b, k, arc));
      CHECK(p.cols() == 50);
      CHECK(p.col(0) == a);
      CHECK(p.col(49) == b);
    }
  }
}

TEST_CASE("angle-radius path between equal radii stays on the circle") {
  const Eigen::MatrixXd p = interpolate_path(spec(polar(2.0, 0.1), polar(2.0, 1.6), Interpolation::angle_radius));
  for (int i = 0; i < p.cols(); ++i) CHECK(p.col(i).norm() == doctest::Approx(2.0).epsilon(1e-12));
  const Eigen::MatrixXd lin = interpolate_path(spec(polar(1.0, 0.0), polar(3.0, 0.0), Interpolation::angle_radius));
  for (int i = 0; i < lin.cols(); ++i) {
    CHECK(lin(0, i) == doctest::Approx(1.0 + 2.0 * i / 49.0).epsilon(1e-12));
    CHECK(lin(1, i) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  }
}

TEST_CASE("shorter arc crosses the branch cut; longer arc goes the other way") {
  const double deg = kPi / 180.0;
  const Eigen::VectorXd a = polar(1.0, 170 * deg), b = polar(1.0, -170 * deg);
  const Eigen::MatrixXd s = interpolate_path(spec(a, b, Interpolation::angle_radius, Arc::shorter, 21));
  // midpoint of the 20 degree arc through 180
  CHECK(std::abs(angle_of(s.col(10))) == doctest::Approx(kPi).epsilon(1e-12));
  for (int i = 0; i < 21; ++i) CHECK(s(0, i) < 0.0);
  const Eigen::MatrixXd l = interpolate_path(spec(a, b, Interpolation::angle_radius, Arc::longer, 21));
  CHECK(angle_of(l.col(10)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(l(0, 10) > 0.0);
}

TEST_CASE("opposite endpoints take the counterclockwise arc") {
  const Eigen::MatrixXd s =
      interpolate_path(spec(polar(1.0, 0.0), polar(1.0, kPi), Interpolation::angle_radius, Arc::shorter, 3));
  CHECK(s(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  const Eigen::MatrixXd l =
      interpolate_path(spec(polar(1.0, 0.0), polar(1.0, kPi), Interpolation::angle_radius, Arc::longer, 3));
  CHECK(l(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  const Eigen::MatrixXd sl = interpolate_path(spec(polar(1.0, 0.0), polar(2.0, kPi), Interpolation::slerp, Arc::shorter, 3));
  CHECK(sl(1, 1) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(sl(0, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("slerp follows the great circle") {
  Eigen::VectorXd a(3), b(3);
  a << 1.0, 0.0, 0.0;
  b << 0.0, 0.0, 2.0;
  const Eigen::MatrixXd p = interpolate_path(spec(a, b, Interpolation::slerp, Arc::shorter, 5));
  for (int i = 0; i < 5; ++i) {
    CHECK(p(1, i) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    CHECK(p.col(i).norm() == doctest::Approx(1.0 + i / 4.0).epsilon(1e-12));
    CHECK(std::atan2(p(2, i), p(0, i)) == doctest::Approx(kPi / 2 * i / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("interpolation validates its inputs") {
  CHECK_THROWS_AS(interpolate_path(spec(polar(1, 0), polar(1, 1), Interpolation::slerp, Arc::shorter, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(interpolate_path(spec(polar(1, 0), Eigen::VectorXd::Ones(3), Interpolation::slerp)),
                  std::invalid_argument);
  CHECK_THROWS_AS(interpolate_path(spec(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3), Interpolation::angle_radius)),
                  std::invalid_argument);
  CHECK(interpolation_from_string(to_string(Interpolation::angle_radius)) == Interpolation::angle_radius);
  CHECK(interpolation_from_string("slerp") == Interpolation::slerp);
  CHECK_THROWS(interpolation_from_string("linear"));
}

TEST_CASE("identity flow maps the path onto itself") {
  spib::LatfModel m = small_model(3, 2);
  m.flow = flow::FlowModel();
  const Eigen::MatrixXd p = interpolate_path(spec(polar(1.0, 0.3), polar(2.0, 2.0), Interpolation::angle_radius));
  CHECK(map_path_to_latent(m, p) == p);
  spib::LatfModel f = small_model(3, 3);
  const Eigen::MatrixXd u = map_path_to_latent(f, p);
  CHECK((f.to_prior_space(u).points - p).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("nearest neighbour search is exact") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd pts = testing::random_matrix(2, 3000, rng);
  const Eigen::MatrixXd q = testing::random_matrix(2, 300, rng, 1.5);
  const NearestNeighborIndex index(pts);
  CHECK(index.size() == 3000);
  const auto got = index.nearest(q);
  for (int j = 0; j < q.cols(); ++j) {
    Eigen::Index best;
    (pts.colwise() - q.col(j)).colwise().squaredNorm().minCoeff(&best);
    CHECK(got[j] == static_cast<std::size_t>(best));
  }
  for (int j = 0; j < 50; ++j) CHECK(index.nearest(Eigen::VectorXd(pts.col(j))) == static_cast<std::size_t>(j));
  CHECK(backmap_nearest(pts, q) == got);
}

TEST_CASE("nearest neighbour ties go to the lowest index and survive isometries") {
  Eigen::MatrixXd pts(2, 40);
  for (int i = 0; i < 40; ++i) pts.col(i) = polar(1.0 + (i % 20), 0.0);  // every point twice
  const NearestNeighborIndex index(pts);
  for (int i = 0; i < 20; ++i) CHECK(index.nearest(Eigen::VectorXd(pts.col(i + 20))) == static_cast<std::size_t>(i));
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd cloud = testing::random_matrix(2, 500, rng);
  const Eigen::MatrixXd q = testing::random_matrix(2, 100, rng);
  Eigen::Matrix2d rot;
  rot << std::cos(0.9), -std::sin(0.9), std::sin(0.9), std::cos(0.9);
  const Eigen::Vector2d shift(3.0, -1.0);
  const Eigen::MatrixXd cloud2 = (rot * cloud).colwise() + shift;
  const Eigen::MatrixXd q2 = (rot * q).colwise() + shift;
  CHECK(backmap_nearest(cloud, q) == backmap_nearest(cloud2, q2));
  CHECK_THROWS(NearestNeighborIndex(Eigen::MatrixXd(2, 0)));
}

TEST_CASE("most likely frames are unchanged by appended identity layers") {
  spib::LatfModel m = small_model(3, 6);
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd x = testing::random_matrix(3, 400, rng, 2.0);
  const auto a = most_likely_per_state(m, x, 1.0);
  m.flow.append_identity_layer({6});
  m.flow.append_identity_layer({6});
  const auto b = most_likely_per_state(m, x, 1.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].frame == b[k].frame);
    CHECK(a[k].log_likelihood == doctest::Approx(b[k].log_likelihood).epsilon(1e-12));
  }
  const auto labels = m.assign_states(x);
  for (const auto& r : a) {
    if (r.frame) CHECK(labels[*r.frame] == r.state);
  }
}

TEST_CASE("generation is reproducible and consistent with the decoder") {
  const spib::LatfModel m = small_model(3, 8);
  const GeneratedEnsemble a = generate(m, 1.0, 2000, 9);
  const GeneratedEnsemble b = generate(m, 1.0, 2000, 9);
  CHECK(a.latent == b.latent);
  CHECK(a.states == b.states);
  CHECK(a.model_hash == m.parameter_hash());
  CHECK((m.to_prior_space(a.latent).points - a.prior_points).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(a.states == m.decode_states(a.prior_points));
  const GeneratedEnsemble hot = generate(m, 2.5, 2000, 9);
  CHECK(hot.prior_points.colwise().norm().mean() > a.prior_points.colwise().norm().mean());
}
