#include "latf/evaluation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

namespace latf::eval {

namespace {

void require_2d(const Eigen::MatrixXd& samples, const char* what) {
  if (samples.rows() != 2) throw std::invalid_argument(std::string(what) + ": expected 2 x n samples");
  if (samples.cols() == 0) throw std::invalid_argument(std::string(what) + ": empty sample set");
}

void padded_range(double lo, double hi, double pad, double& out_lo, double& out_hi) {
  double width = hi - lo;
  if (!(width > 0.0)) width = std::max(1.0, std::abs(lo));
  out_lo = lo - pad * width;
  out_hi = hi + pad * width;
  if (out_hi == out_lo) {
    out_lo -= 0.5;
    out_hi += 0.5;
  }
}

int clamp_bin(double v, double lo, double hi, int bins) {
  const double f = (v - lo) / (hi - lo) * bins;
  if (!(f >= 0.0)) return 0;  // also catches NaN
  if (f >= bins) return bins - 1;
  return static_cast<int>(f);
}

}  // namespace

HistogramGrid HistogramGrid::covering(const Eigen::MatrixXd& points, int bins, double pad) {
  require_2d(points, "histogram grid");
  HistogramGrid g;
  g.bins_x = g.bins_y = bins;
  padded_range(points.row(0).minCoeff(), points.row(0).maxCoeff(), pad, g.x_min, g.x_max);
  padded_range(points.row(1).minCoeff(), points.row(1).maxCoeff(), pad, g.y_min, g.y_max);
  return g;
}

HistogramGrid HistogramGrid::covering(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int bins,
                                      double pad) {
  require_2d(p, "symmetric_kl");
  require_2d(q, "symmetric_kl");
  HistogramGrid g;
  g.bins_x = g.bins_y = bins;
  padded_range(std::min(p.row(0).minCoeff(), q.row(0).minCoeff()),
               std::max(p.row(0).maxCoeff(), q.row(0).maxCoeff()), pad, g.x_min, g.x_max);
  padded_range(std::min(p.row(1).minCoeff(), q.row(1).minCoeff()),
               std::max(p.row(1).maxCoeff(), q.row(1).maxCoeff()), pad, g.y_min, g.y_max);
  return g;
}

int HistogramGrid::bin_x(double x) const { return clamp_bin(x, x_min, x_max, bins_x); }
int HistogramGrid::bin_y(double y) const { return clamp_bin(y, y_min, y_max, bins_y); }
double HistogramGrid::center_x(int i) const { return x_min + (i + 0.5) * (x_max - x_min) / bins_x; }
double HistogramGrid::center_y(int j) const { return y_min + (j + 0.5) * (y_max - y_min) / bins_y; }

Histogram2D histogram2d(const Eigen::MatrixXd& samples, const HistogramGrid& grid, double alpha) {
  require_2d(samples, "histogram2d");
  if (grid.bins_x < 1 || grid.bins_y < 1) throw std::invalid_argument("histogram2d: bins must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("histogram2d: alpha must be >= 0");
  Histogram2D h;
  h.grid = grid;
  h.alpha = alpha;
  h.counts = Eigen::MatrixXd::Zero(grid.bins_x, grid.bins_y);
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    const double x = samples(0, k), y = samples(1, k);
    if (x < grid.x_min || x > grid.x_max || y < grid.y_min || y > grid.y_max) ++h.outside;
    h.counts(grid.bin_x(x), grid.bin_y(y)) += 1.0;
  }
  h.mass = (h.counts.array() / static_cast<double>(samples.cols()) + alpha).matrix();
  h.mass /= h.mass.sum();
  return h;
}

double symmetric_kl_mass(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw std::invalid_argument("symmetric_kl: grid mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double a = p(i, j), b = q(i, j);
      if (a == b) continue;
      if (!(a > 0.0) || !(b > 0.0)) return std::numeric_limits<double>::infinity();
      total += (a - b) * (std::log(a) - std::log(b));
    }
  }
  return total;
}

double symmetric_kl(const Histogram2D& p, const Histogram2D& q) { return symmetric_kl_mass(p.mass, q.mass); }

double symmetric_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q, int bins,
                    double alpha) {
  const HistogramGrid grid = HistogramGrid::covering(samples_p, samples_q, bins, 0.05);
  return symmetric_kl(histogram2d(samples_p, grid, alpha), histogram2d(samples_q, grid, alpha));
}

double symmetric_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
                    const HistogramGrid& grid, double alpha) {
  return symmetric_kl(histogram2d(samples_p, grid, alpha), histogram2d(samples_q, grid, alpha));
}

std::string histogram_csv(const Histogram2D& h) {
  std::ostringstream out;
  out.precision(17);
  out << "x,y,mass\n";
  for (int i = 0; i < h.grid.bins_x; ++i) {
    for (int j = 0; j < h.grid.bins_y; ++j) {
      out << h.grid.center_x(i) << ',' << h.grid.center_y(j) << ',' << h.mass(i, j) << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------

int MarkovModel::index_of(int state) const {
  auto it = std::find(states.begin(), states.end(), state);
  return it == states.end() ? -1 : static_cast<int>(it - states.begin());
}

std::vector<std::complex<double>> MarkovModel::eigenvalues() const {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(transition, false);
  std::vector<std::complex<double>> values(solver.eigenvalues().data(),
                                           solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return values;
}

std::vector<double> MarkovModel::implied_timescales() const {
  std::vector<std::complex<double>> values = eigenvalues();
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return std::abs(a) > std::abs(b); });
  std::vector<double> out;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double m = std::abs(values[i]);
    out.push_back(m >= 1.0 ? std::numeric_limits<double>::infinity()
                           : (m == 0.0 ? 0.0 : -lag / std::log(m)));
  }
  return out;
}

MarkovModel build_msm(const std::vector<std::vector<int>>& series, int lag) {
  if (lag < 1) throw std::invalid_argument("build_msm: lag must be >= 1");
  int n = 0;
  for (const auto& s : series) {
    for (int v : s) {
      if (v < 0) throw std::invalid_argument("build_msm: negative state id");
      n = std::max(n, v + 1);
    }
  }
  if (n == 0) throw std::invalid_argument("build_msm: no labels");
  std::vector<char> observed(n, 0);
  for (const auto& s : series)
    for (int v : s) observed[v] = 1;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (const auto& s : series) {
    for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < s.size(); ++t) c(s[t], s[t + lag]) += 1.0;
  }
  if (c.sum() == 0.0) throw std::invalid_argument("build_msm: series shorter than the lag");
  const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());

  // Connected components of the symmetric count graph.
  std::vector<int> component(n, -1);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < n; ++s) {
    if (component[s] >= 0 || sym.row(s).sum() == 0.0) continue;
    std::vector<int> members{s};
    component[s] = static_cast<int>(comps.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      for (int j = 0; j < n; ++j) {
        if (component[j] < 0 && sym(members[k], j) > 0.0) {
          component[j] = component[s];
          members.push_back(j);
        }
      }
    }
    std::sort(members.begin(), members.end());
    comps.push_back(std::move(members));
  }
  std::size_t best = 0;
  auto mass = [&](const std::vector<int>& m) {
    double t = 0.0;
    for (int i : m) t += sym.row(i).sum();
    return t;
  };
  for (std::size_t k = 1; k < comps.size(); ++k) {
    if (comps[k].size() > comps[best].size() ||
        (comps[k].size() == comps[best].size() && mass(comps[k]) > mass(comps[best]))) {
      best = k;
    }
  }

  MarkovModel m;
  m.lag = lag;
  m.states = comps[best];
  for (int s = 0; s < n; ++s) {
    if (observed[s] && std::find(m.states.begin(), m.states.end(), s) == m.states.end()) m.dropped.push_back(s);
  }
  const auto k = static_cast<Eigen::Index>(m.states.size());
  m.counts.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m.counts(i, j) = sym(m.states[i], m.states[j]);
  }
  m.transition = m.counts;
  for (Eigen::Index i = 0; i < k; ++i) m.transition.row(i) /= m.counts.row(i).sum();

  Eigen::EigenSolver<Eigen::MatrixXd> solver(m.transition.transpose(), true);
  Eigen::Index lead = 0;
  solver.eigenvalues().real().maxCoeff(&lead);
  Eigen::VectorXd pi = solver.eigenvectors().col(lead).real();
  pi /= pi.sum();
  m.stationary = pi.cwiseAbs();
  m.stationary /= m.stationary.sum();
  return m;
}

MarkovModel build_msm(const std::vector<int>& series, int lag) {
  return build_msm(std::vector<std::vector<int>>{series}, lag);
}

// ---------------------------------------------------------------------------

void indicator_correlations(const std::vector<std::vector<int>>& segments, int lag, int n_states,
                            Eigen::MatrixXd& c00, Eigen::MatrixXd& c0t) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_states, n_states);
  double pairs = 0.0;
  for (const auto& s : segments) {
    for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < s.size(); ++t) {
      counts(s[t], s[t + lag]) += 1.0;
      pairs += 1.0;
    }
  }
  if (pairs == 0.0) throw std::invalid_argument("gmrq: fold shorter than the lag");
  c0t = 0.5 * (counts + counts.transpose()) / pairs;
  c00 = c0t.rowwise().sum().asDiagonal();
}

double gmrq_fold_score(const Eigen::MatrixXd& c00_train, const Eigen::MatrixXd& c0t_train,
                       const Eigen::MatrixXd& c00_test, const Eigen::MatrixXd& c0t_test,
                       std::vector<std::string>* notes) {
  constexpr double kRidge = 1e-8;
  const Eigen::Index k = c00_train.rows();
  Eigen::MatrixXd a = c00_train;
  if (a.diagonal().minCoeff() <= 0.0) {
    a.diagonal().array() += kRidge;
    if (notes) notes->push_back("training C00 singular; ridge 1e-8 applied");
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(c0t_train, a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("gmrq: generalized eigensolver failed");
  const Eigen::MatrixXd v = solver.eigenvectors().rightCols(k);
  Eigen::MatrixXd s = v.transpose() * c00_test * v;
  const Eigen::MatrixXd r = v.transpose() * c0t_test * v;
  if (c00_test.diagonal().minCoeff() <= 0.0) {
    s = v.transpose() * (c00_test + kRidge * Eigen::MatrixXd::Identity(k, k)) * v;
    if (notes) notes->push_back("test C00 singular; ridge 1e-8 applied");
  }
  return (r * s.inverse()).trace();
}

namespace {

std::vector<std::vector<int>> split_series(const std::vector<int>& s, int folds, int fold, bool take) {
  std::vector<std::vector<int>> out;
  const std::size_t n = s.size();
  for (int f = 0; f < folds; ++f) {
    if ((f == fold) != take) continue;
    const std::size_t b = n * static_cast<std::size_t>(f) / static_cast<std::size_t>(folds);
    const std::size_t e = n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(folds);
    out.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(b), s.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

GmrqResult gmrq_score(const std::vector<std::vector<int>>& series, int lag, int folds) {
  if (lag < 1) throw std::invalid_argument("gmrq: lag must be >= 1");
  if (folds < 2) throw std::invalid_argument("gmrq: need at least two folds");
  int n = 0;
  for (const auto& s : series) {
    for (int v : s) {
      if (v < 0) throw std::invalid_argument("gmrq: negative state id");
      n = std::max(n, v + 1);
    }
  }
  GmrqResult result;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::vector<int>> train, test;
    for (const auto& s : series) {
      for (auto& seg : split_series(s, folds, f, false)) train.push_back(std::move(seg));
      for (auto& seg : split_series(s, folds, f, true)) test.push_back(std::move(seg));
    }
    Eigen::MatrixXd c00a, c0ta, c00b, c0tb;
    indicator_correlations(train, lag, n, c00a, c0ta);
    indicator_correlations(test, lag, n, c00b, c0tb);
    if ((c00a.diagonal().array() > 0.0).count() < 2) {
      throw std::invalid_argument("gmrq: fewer than two states in training fold " + std::to_string(f));
    }
    std::vector<std::string> notes;
    result.fold_scores.push_back(gmrq_fold_score(c00a, c0ta, c00b, c0tb, &notes));
    for (auto& note : notes) result.notes.push_back("fold " + std::to_string(f) + ": " + note);
  }
  result.mean = mean_of(result.fold_scores);
  result.spread = stddev_of(result.fold_scores);
  return result;
}

GmrqResult gmrq_score(const std::vector<int>& series, int lag, int folds) {
  return gmrq_score(std::vector<std::vector<int>>{series}, lag, folds);
}

Eigen::VectorXd state_populations(const std::vector<int>& states, int n_states) {
  if (states.empty()) throw std::invalid_argument("state_populations: empty ensemble");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_states);
  for (int s : states) {
    if (s < 0 || s >= n_states) throw std::out_of_range("state_populations: state id out of range");
    p(s) += 1.0;
  }
  return p / static_cast<double>(states.size());
}

PopulationEstimate bootstrap_populations(const std::vector<int>& states, int n_states, int n_blocks,
                                         int resamples, std::uint64_t seed) {
  if (states.empty()) throw std::invalid_argument("bootstrap_populations: empty series");
  n_blocks = std::max(1, std::min<int>(n_blocks, static_cast<int>(states.size())));
  std::vector<Eigen::VectorXd> block_counts(n_blocks, Eigen::VectorXd::Zero(n_states));
  std::vector<double> block_sizes(n_blocks, 0.0);
  const std::size_t n = states.size();
  for (int b = 0; b < n_blocks; ++b) {
    const std::size_t lo = n * b / n_blocks, hi = n * (b + 1) / n_blocks;
    for (std::size_t t = lo; t < hi; ++t) block_counts[b](states[t]) += 1.0;
    block_sizes[b] = static_cast<double>(hi - lo);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n_blocks - 1);
  Eigen::MatrixXd draws(n_states, resamples);
  for (int r = 0; r < resamples; ++r) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n_states);
    double total = 0.0;
    for (int b = 0; b < n_blocks; ++b) {
      const int k = pick(rng);
      c += block_counts[k];
      total += block_sizes[k];
    }
    draws.col(r) = c / total;
  }
  PopulationEstimate est;
  est.mean = draws.rowwise().mean();
  est.stddev = Eigen::VectorXd::Zero(n_states);
  if (resamples > 1) {
    est.stddev = ((draws.colwise() - est.mean).array().square().rowwise().sum() / (resamples - 1)).sqrt();
  }
  return est;
}

// ---------------------------------------------------------------------------

namespace {

/// Solves q = P q on the interior with q = 1 on `one` and q = 0 on `zero`.
Eigen::VectorXd committor(const Eigen::MatrixXd& p, const std::vector<char>& is_zero,
                          const std::vector<char>& is_one) {
  const Eigen::Index n = p.rows();
  std::vector<Eigen::Index> interior;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!is_zero[i] && !is_one[i]) interior.push_back(i);
  }
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_one[i]) q(i) = 1.0;
  }
  if (interior.empty()) return q;
  const auto m = static_cast<Eigen::Index>(interior.size());
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) a(r, c) = p(interior[r], interior[c]) - (r == c ? 1.0 : 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (is_one[j]) rhs(r) -= p(interior[r], j);
    }
  }
  const Eigen::VectorXd x = a.fullPivLu().solve(rhs);
  for (Eigen::Index r = 0; r < m; ++r) q(interior[r]) = std::clamp(x(r), 0.0, 1.0);
  return q;
}

}  // namespace

TptResult tpt_paths(const MarkovModel& msm, const std::vector<int>& source, const std::vector<int>& sink,
                    int top_k) {
  if (source.empty() || sink.empty()) throw std::invalid_argument("tpt: source and sink must be nonempty");
  const Eigen::Index n = msm.state_count();
  std::vector<char> in_a(n, 0), in_b(n, 0);
  for (int s : source) {
    const int i = msm.index_of(s);
    if (i < 0) throw std::invalid_argument("tpt: source state " + std::to_string(s) + " is not in the connected set");
    in_a[i] = 1;
  }
  for (int s : sink) {
    const int i = msm.index_of(s);
    if (i < 0) throw std::invalid_argument("tpt: sink state " + std::to_string(s) + " is not in the connected set");
    if (in_a[i]) throw std::invalid_argument("tpt: source and sink overlap at state " + std::to_string(s));
    in_b[i] = 1;
  }
  const Eigen::MatrixXd& p = msm.transition;
  const Eigen::VectorXd& pi = msm.stationary;

  TptResult r;
  r.forward_committor = committor(p, in_a, in_b);
  Eigen::MatrixXd reversed(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) reversed(i, j) = pi(j) * p(j, i) / pi(i);
  }
  r.backward_committor = committor(reversed, in_b, in_a);

  const Eigen::VectorXd& qp = r.forward_committor;
  const Eigen::VectorXd& qm = r.backward_committor;
  r.net_flux = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double f = pi(i) * qm(i) * p(i, j) * qp(j) - pi(j) * qm(j) * p(j, i) * qp(i);
      r.net_flux(i, j) = std::max(0.0, f);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (in_a[i]) r.total_flux += r.net_flux.row(i).sum();
  }

  Eigen::MatrixXd residual = r.net_flux;
  std::vector<Pathway> paths;
  const double floor = 1e-15 * r.total_flux;
  const int max_paths = static_cast<int>(n * n) + 16;
  for (int it = 0; it < max_paths && r.total_flux > 0.0; ++it) {
    std::vector<double> width(n, 0.0);
    std::vector<Eigen::Index> prev(n, -1);
    std::vector<char> done(n, 0);
    std::priority_queue<std::pair<double, Eigen::Index>> heap;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_a[i]) {
        width[i] = std::numeric_limits<double>::infinity();
        heap.push({width[i], i});
      }
    }
    while (!heap.empty()) {
      const auto [w, u] = heap.top();
      heap.pop();
      if (done[u] || w < width[u]) continue;
      done[u] = 1;
      if (in_b[u]) continue;
      for (Eigen::Index v = 0; v < n; ++v) {
        if (in_a[v] || residual(u, v) <= 0.0) continue;
        const double cand = std::min(w, residual(u, v));
        if (cand > width[v]) {
          width[v] = cand;
          prev[v] = u;
          heap.push({cand, v});
        }
      }
    }
    Eigen::Index end = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_b[i] && width[i] > 0.0 && (end < 0 || width[i] > width[end])) end = i;
    }
    if (end < 0 || width[end] <= floor) break;
    const double bottleneck = width[end];
    Pathway path;
    path.flux = bottleneck;
    for (Eigen::Index v = end; v >= 0; v = prev[v]) {
      path.states.push_back(msm.states[v]);
      if (prev[v] >= 0) residual(prev[v], v) -= bottleneck;
    }
    std::reverse(path.states.begin(), path.states.end());
    r.decomposed_flux += bottleneck;
    paths.push_back(std::move(path));
  }
  std::stable_sort(paths.begin(), paths.end(), [](const Pathway& a, const Pathway& b) { return a.flux > b.flux; });
  r.pathway_count = paths.size();
  if (top_k >= 0 && paths.size() > static_cast<std::size_t>(top_k)) paths.resize(top_k);
  r.pathways = std::move(paths);
  return r;
}

}  // namespace latf::eval
