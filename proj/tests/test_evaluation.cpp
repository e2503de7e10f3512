#include "latf/evaluation.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace latf;
using namespace latf::eval;

namespace {

Eigen::MatrixXd gaussian_samples(int n, double mx, double sx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd s(2, n);
  for (int i = 0; i < n; ++i) {
    s(0, i) = mx + sx * g(rng);
    s(1, i) = g(rng);
  }
  return s;
}

std::vector<int> markov_chain(const Eigen::MatrixXd& p, int n, std::uint64_t seed, int start = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> s{start};
  for (int t = 1; t < n; ++t) {
    double r = u(rng);
    int j = 0;
    while (j + 1 < p.cols() && r >= p(s.back(), j)) r -= p(s.back(), j++);
    s.push_back(j);
  }
  return s;
}

}  // namespace

TEST_CASE("symmetric KL of a set with itself is zero and the measure is symmetric") {
  const Eigen::MatrixXd p = gaussian_samples(5000, 0.0, 1.0, 1);
  const Eigen::MatrixXd q = gaussian_samples(5000, 0.5, 1.3, 2);
  CHECK(symmetric_kl(p, p) == 0.0);
  CHECK(symmetric_kl(p, q) == symmetric_kl(q, p));
  const HistogramGrid grid = HistogramGrid::covering(p);
  CHECK(symmetric_kl(p, q, grid) == symmetric_kl(q, p, grid));
  CHECK(symmetric_kl(p, q) > 0.0);
}

TEST_CASE("histogram bookkeeping") {
  HistogramGrid g;
  g.x_min = 0.0;
  g.x_max = 1.0;
  g.y_min = 0.0;
  g.y_max = 1.0;
  g.bins_x = g.bins_y = 4;
  Eigen::MatrixXd s(2, 4);
  s << 0.1, 0.9, 2.0, -1.0,
       0.1, 0.9, 0.5, 0.5;
  const Histogram2D h = histogram2d(s, g, 0.0);
  CHECK(h.outside == 2);
  CHECK(h.counts.sum() == 4);
  CHECK(h.counts(0, 0) == 1);
  CHECK(h.counts(3, 3) == 1);
  CHECK(h.counts(3, 2) == 1);
  CHECK(h.counts(0, 2) == 1);
  CHECK(h.mass.sum() == doctest::Approx(1.0));
  CHECK(g.center_x(0) == doctest::Approx(0.125));
  const std::string csv = histogram_csv(h);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
}

TEST_CASE("histogram KL matches the Gaussian closed form") {
  // N(0,1) vs N(0.5,1) in x, identical in y: symmetric KL = mu^2 = 0.25
  const int n = 400000;
  const Eigen::MatrixXd p = gaussian_samples(n, 0.0, 1.0, 3);
  const Eigen::MatrixXd q = gaussian_samples(n, 0.5, 1.0, 4);
  const double kl = symmetric_kl(p, q, 50, 1e-5);
  CHECK(kl == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("finite-sample KL between identical distributions shrinks with n") {
  double previous = 1e9;
  for (int n : {2000, 20000, 200000}) {
    const double kl = symmetric_kl(gaussian_samples(n, 0.0, 1.0, 5), gaussian_samples(n, 0.0, 1.0, 6), 30, 1e-10);
    CHECK(kl < previous);
    previous = kl;
  }
}

TEST_CASE("alternating chain has eigenvalues one and minus one") {
  std::vector<int> s;
  for (int i = 0; i < 1000; ++i) s.push_back(i % 2);
  const MarkovModel m = build_msm(s, 1);
  CHECK(m.transition(0, 1) == 1.0);
  CHECK(m.transition(1, 0) == 1.0);
  const auto ev = m.eigenvalues();
  CHECK(ev[0].real() == doctest::Approx(1.0));
  CHECK(ev[1].real() == doctest::Approx(-1.0));
  CHECK(m.stationary(0) == doctest::Approx(0.5));
}

TEST_CASE("msm invariants on a random chain") {
  Eigen::MatrixXd p(3, 3);
  p << 0.9, 0.08, 0.02,
       0.05, 0.9, 0.05,
       0.02, 0.08, 0.9;
  const auto s = markov_chain(p, 200000, 7);
  const MarkovModel m = build_msm(s, 1);
  for (int i = 0; i < 3; ++i) CHECK(m.transition.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK((m.stationary.transpose() * m.transition - m.stationary.transpose()).norm() < 1e-12);
  CHECK(m.stationary.sum() == doctest::Approx(1.0));
  for (const auto& l : m.eigenvalues()) CHECK(std::abs(l) <= 1.0 + 1e-12);
  CHECK((m.transition - p).cwiseAbs().maxCoeff() < 0.01);
  const auto ts = m.implied_timescales();
  CHECK(ts.size() == 2);
  CHECK(ts[0] >= ts[1]);
  // symmetrized counts make the chain reversible
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(m.stationary(i) * m.transition(i, j) == doctest::Approx(m.stationary(j) * m.transition(j, i)));
}

TEST_CASE("msm keeps the largest connected set") {
  std::vector<std::vector<int>> series{{0, 1, 0, 1, 0, 1, 0, 1}, {5, 5, 5}};
  const MarkovModel m = build_msm(series, 1);
  CHECK(m.states == std::vector<int>{0, 1});
  CHECK(m.dropped == std::vector<int>{5});
  CHECK(m.index_of(5) == -1);
  CHECK(m.index_of(1) == 1);
}

TEST_CASE("gmrq approaches the state count for metastable blocks and one for iid labels") {
  Eigen::MatrixXd p(2, 2);
  p << 0.999, 0.001, 0.001, 0.999;
  const GmrqResult sticky = gmrq_score(markov_chain(p, 200000, 8), 1, 5);
  CHECK(sticky.mean <= 2.0 + 1e-9);
  CHECK(sticky.mean > 1.99);
  CHECK(sticky.fold_scores.size() == 5);
  Eigen::MatrixXd iid = Eigen::MatrixXd::Constant(2, 2, 0.5);
  const GmrqResult flat = gmrq_score(markov_chain(iid, 200000, 9), 1, 5);
  CHECK(flat.mean == doctest::Approx(1.0).epsilon(0.01));
  Eigen::MatrixXd three(3, 3);
  three << 0.98, 0.01, 0.01, 0.01, 0.98, 0.01, 0.01, 0.01, 0.98;
  const GmrqResult g3 = gmrq_score(markov_chain(three, 200000, 10), 1, 5);
  CHECK(g3.mean < 3.0);
  CHECK(g3.mean > 2.9);
}

TEST_CASE("gmrq of a perfectly block-diagonal chain equals the state count") {
  std::vector<std::vector<int>> series;
  for (int s = 0; s < 3; ++s) series.push_back(std::vector<int>(500, s));
  Eigen::MatrixXd c00, c0t;
  indicator_correlations(series, 1, 3, c00, c0t);
  CHECK(gmrq_fold_score(c00, c0t, c00, c0t) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("gmrq needs two states in training") {
  CHECK_THROWS(gmrq_score(std::vector<int>(1000, 0), 1, 5));
}

TEST_CASE("populations and their bootstrap") {
  std::vector<int> s;
  for (int i = 0; i < 1000; ++i) s.push_back(i < 250 ? 0 : 1);
  const Eigen::VectorXd p = state_populations(s, 3);
  CHECK(p(0) == 0.25);
  CHECK(p(1) == 0.75);
  CHECK(p(2) == 0.0);
  const PopulationEstimate a = bootstrap_populations(s, 3, 20, 100, 4);
  const PopulationEstimate b = bootstrap_populations(s, 3, 20, 100, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.mean.sum() == doctest::Approx(1.0));
  CHECK(a.stddev(0) > 0.0);
  CHECK(a.stddev(2) == 0.0);
  CHECK(std::abs(a.mean(0) - 0.25) < 3 * a.stddev(0));
}

TEST_CASE("committor on a linear chain") {
  // symmetric random walk on 0..4 with reflecting ends
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < 5; ++i) {
    p(i, std::max(0, i - 1)) += 0.5;
    p(i, std::min(4, i + 1)) += 0.5;
  }
  MarkovModel m;
  m.transition = p;
  m.stationary = Eigen::VectorXd::Constant(5, 0.2);
  m.states = {0, 1, 2, 3, 4};
  const TptResult r = tpt_paths(m, {0}, {4}, 5);
  CHECK(r.forward_committor(0) == 0.0);
  CHECK(r.forward_committor(4) == 1.0);
  CHECK(r.forward_committor(2) == doctest::Approx(0.5).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) {
    CHECK(r.forward_committor(i) == doctest::Approx(i / 4.0).epsilon(1e-12));
    CHECK(r.backward_committor(i) == doctest::Approx(1.0 - i / 4.0).epsilon(1e-12));
  }
  for (int i = 1; i < 5; ++i) CHECK(r.forward_committor(i) >= r.forward_committor(i - 1));
  CHECK(r.pathway_count == 1);
  CHECK(r.pathways[0].states == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(r.decomposed_flux == doctest::Approx(r.total_flux).epsilon(1e-10));
}

TEST_CASE("flux decomposition conserves the total on a branched chain") {
  Eigen::MatrixXd p(6, 6);
  p << 0.8, 0.15, 0.05, 0.0, 0.0, 0.0,
       0.1, 0.7, 0.0, 0.15, 0.05, 0.0,
       0.1, 0.0, 0.7, 0.05, 0.15, 0.0,
       0.0, 0.1, 0.05, 0.7, 0.0, 0.15,
       0.0, 0.05, 0.1, 0.0, 0.7, 0.15,
       0.0, 0.0, 0.0, 0.1, 0.1, 0.8;
  const MarkovModel m = build_msm(markov_chain(p, 400000, 12), 1);
  const TptResult r = tpt_paths(m, {0}, {5}, 3);
  CHECK(std::abs(r.decomposed_flux - r.total_flux) <= 1e-10 * std::max(1.0, r.total_flux));
  CHECK(r.pathways.size() == 3);
  CHECK(r.pathway_count >= 3);
  for (std::size_t k = 1; k < r.pathways.size(); ++k) CHECK(r.pathways[k].flux <= r.pathways[k - 1].flux);
  for (const auto& path : r.pathways) {
    CHECK(path.states.front() == 0);
    CHECK(path.states.back() == 5);
  }
  for (int i = 0; i < r.forward_committor.size(); ++i) {
    CHECK(r.forward_committor(i) >= 0.0);
    CHECK(r.forward_committor(i) <= 1.0);
    CHECK(r.backward_committor(i) >= 0.0);
    CHECK(r.backward_committor(i) <= 1.0);
  }
  CHECK((r.net_flux.array() >= 0.0).all());
  // flux out of A equals flux into B
  const int a = m.index_of(0), b = m.index_of(5);
  CHECK(r.net_flux.row(a).sum() == doctest::Approx(r.net_flux.col(b).sum()).epsilon(1e-10));
  CHECK(r.net_flux.row(a).sum() == doctest::Approx(r.total_flux).epsilon(1e-12));
}

TEST_CASE("tpt rejects overlapping or unknown sets") {
  std::vector<int> s;
  for (int i = 0; i < 100; ++i) s.push_back(i % 3);
  const MarkovModel m = build_msm(s, 1);
  CHECK_THROWS_AS(tpt_paths(m, {0}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(tpt_paths(m, {0}, {7}), std::invalid_argument);
  CHECK_THROWS_AS(tpt_paths(m, {}, {1}), std::invalid_argument);
}
