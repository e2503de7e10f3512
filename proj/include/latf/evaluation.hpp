#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace latf::eval {

/// Regular 2D binning over [x_min, x_max] x [y_min, y_max].
struct HistogramGrid {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  int bins_x = 50, bins_y = 50;

  /// Bounding box of the points padded by `pad` of its extent on every side.
  static HistogramGrid covering(const Eigen::MatrixXd& points, int bins = 50, double pad = 0.05);
  /// Union bounding box of both sets.
  static HistogramGrid covering(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, int bins = 50,
                                double pad = 0.05);

  int bin_x(double x) const;  // clamped to [0, bins_x)
  int bin_y(double y) const;
  double center_x(int i) const;
  double center_y(int j) const;
};

struct Histogram2D {
  HistogramGrid grid;
  Eigen::MatrixXd counts;  // bins_x x bins_y
  double alpha = 1e-10;
  Eigen::MatrixXd mass;    // (counts / n + alpha) renormalized
  std::size_t outside = 0; // samples clamped into edge bins
};

/// Bins the columns of a 2 x n matrix. Samples outside the grid land in the
/// nearest edge bin and are counted in `outside`.
Histogram2D histogram2d(const Eigen::MatrixXd& samples, const HistogramGrid& grid, double alpha = 1e-10);

/// KL(P||Q) + KL(Q||P) over regularized masses on the same grid.
double symmetric_kl(const Histogram2D& p, const Histogram2D& q);
double symmetric_kl_mass(const Eigen::MatrixXd& mass_p, const Eigen::MatrixXd& mass_q);
/// Shared binning over the union bounding box padded 5%.
double symmetric_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q, int bins = 50,
                    double alpha = 1e-10);
/// Binning fixed by the caller, typically from a reference set.
double symmetric_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
                    const HistogramGrid& grid, double alpha = 1e-10);

/// Rows of (x, y, mass) for external plotting.
std::string histogram_csv(const Histogram2D& h);

// ---------------------------------------------------------------------------
// Markov state models

struct MarkovModel {
  Eigen::MatrixXd transition;  // row-stochastic over active states
  Eigen::VectorXd stationary;
  Eigen::MatrixXd counts;      // symmetrized counts over active states
  int lag = 1;
  std::vector<int> states;     // original ids of active states
  std::vector<int> dropped;    // original ids outside the largest connected set

  int state_count() const { return static_cast<int>(states.size()); }
  /// Index of an original id in the active set, or -1.
  int index_of(int state) const;
  /// Eigenvalues sorted by decreasing real part.
  std::vector<std::complex<double>> eigenvalues() const;
  /// -lag / log|lambda_i| for the non-stationary eigenvalues.
  std::vector<double> implied_timescales() const;
};

/// Sliding-window counts at `lag` over every series, symmetrized, restricted
/// to the largest connected set, row-normalized.
MarkovModel build_msm(const std::vector<std::vector<int>>& series, int lag);
MarkovModel build_msm(const std::vector<int>& series, int lag);

struct GmrqResult {
  std::vector<double> fold_scores;
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation over folds
  std::vector<std::string> notes;
};

/// Score of one split: eigenvectors of the training-fold correlation matrices
/// evaluated on the test-fold matrices. Both are given as symmetrized
/// indicator correlations.
double gmrq_fold_score(const Eigen::MatrixXd& c00_train, const Eigen::MatrixXd& c0t_train,
                       const Eigen::MatrixXd& c00_test, const Eigen::MatrixXd& c0t_test,
                       std::vector<std::string>* notes = nullptr);

/// Indicator correlation matrices of a set of label segments at `lag`.
void indicator_correlations(const std::vector<std::vector<int>>& segments, int lag, int n_states,
                            Eigen::MatrixXd& c00, Eigen::MatrixXd& c0t);

/// Each series is cut into `folds` contiguous segments; fold f is scored on
/// its own segments with eigenvectors from the others.
GmrqResult gmrq_score(const std::vector<std::vector<int>>& series, int lag, int folds = 5);
GmrqResult gmrq_score(const std::vector<int>& series, int lag, int folds = 5);

/// Empirical frequencies of ids in [0, n_states).
Eigen::VectorXd state_populations(const std::vector<int>& states, int n_states);

struct PopulationEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

/// Bootstrap over `n_blocks` contiguous blocks of the label series.
PopulationEstimate bootstrap_populations(const std::vector<int>& states, int n_states, int n_blocks = 20,
                                         int resamples = 100, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Transition path theory

struct Pathway {
  std::vector<int> states;  // original ids, source to sink
  double flux = 0.0;
};

struct TptResult {
  Eigen::VectorXd forward_committor;   // over the MSM's active states
  Eigen::VectorXd backward_committor;
  Eigen::MatrixXd net_flux;
  double total_flux = 0.0;
  double decomposed_flux = 0.0;  // sum over all extracted pathways
  std::vector<Pathway> pathways;  // ranked, truncated to top_k
  std::size_t pathway_count = 0;  // before truncation
};

/// A and B are original state ids. Net flux
/// f_ij = max(0, pi_i q-_i P_ij q+_j - pi_j q-_j P_ji q+_i); pathways by
/// repeatedly removing the widest (bottleneck) path.
TptResult tpt_paths(const MarkovModel& msm, const std::vector<int>& source, const std::vector<int>& sink,
                    int top_k = 5);

}  // namespace latf::eval
