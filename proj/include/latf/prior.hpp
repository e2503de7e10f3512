#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

namespace latf::prior {

/// Kummer's confluent hypergeometric function M(a, b, z) for z >= 0.
/// Summed by term-ratio recursion with a running exponent so large z does
/// not overflow. Throws std::domain_error for z < 0 or b a non-positive
/// integer, std::runtime_error if the series fails to converge.
double kummer_m(double a, double b, double z);

/// log M(a, b, z); requires M > 0 (always true for a, b > 0, z >= 0).
double log_kummer_m(double a, double b, double z);

/// log Z_{tau,T} for the temperature-steerable tilted Gaussian in `dim`
/// dimensions. T = 1 gives the plain tilted normalizer Z_tau.
double log_normalization(double tau, double temperature, int dim);

/// Exponentially tilted Gaussian r_T(z, tau) ∝ exp(tau |z|) N(z; 0, T I).
/// tau = 0 and T = 1 is the standard normal.
class TiltedPrior {
 public:
  TiltedPrior() : TiltedPrior(0.0, 2, 1.0) {}
  TiltedPrior(double tau, int dim, double temperature = 1.0);

  double tau() const { return tau_; }
  int dim() const { return dim_; }
  double temperature() const { return temperature_; }
  double log_z() const { return log_z_; }
  /// Radius of maximum density, T * tau.
  double mode_radius() const { return temperature_ * tau_; }

  TiltedPrior at_temperature(double temperature) const { return {tau_, dim_, temperature}; }

  double log_density(const Eigen::VectorXd& z) const;
  double log_density_norm(double norm) const;
  /// Same density through the completed-square form
  /// -(|z| - T tau)^2 / 2T + T tau^2 / 2.
  double log_density_completed_square(const Eigen::VectorXd& z) const;
  /// Gradient of log_density; the tilt term contributes nothing at z = 0.
  Eigen::VectorXd grad_log_density(const Eigen::VectorXd& z) const;

  /// Column-wise log density and gradient for a (dim x n) batch.
  Eigen::VectorXd log_density_batch(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd grad_log_density_batch(const Eigen::MatrixXd& z) const;

 private:
  double tau_;
  int dim_;
  double temperature_;
  double log_z_;
};

/// Radial CDF P(|z| <= r) for dim == 2, in closed form.
double radial_cdf(const TiltedPrior& prior, double r);
/// Radial density p(r) ∝ r^{dim-1} exp(tau r - r^2 / 2T), normalized, dim == 2.
double radial_density(const TiltedPrior& prior, double r);

/// Exact i.i.d. sampler for dim == 2: uniform direction, radius by inverting
/// the closed-form radial CDF. Returns a (2 x n) matrix.
Eigen::MatrixXd sample_exact(const TiltedPrior& prior, std::size_t n, std::uint64_t seed);

struct MetropolisOptions {
  double step_scale = 1.0;         // initial proposal standard deviation
  std::size_t burn_in = 5000;
  std::size_t thinning = 10;
  double target_acceptance = 0.4;  // burn-in tuning target
  bool tune = true;
};

struct MetropolisResult {
  Eigen::MatrixXd samples;  // dim x n
  double acceptance_rate = 0.0;
  double step_scale = 0.0;  // tuned scale used after burn-in
  std::optional<std::string> warning;
};

/// Random-walk Metropolis with isotropic Gaussian proposals. The step scale
/// is tuned during burn-in towards the target acceptance; post burn-in
/// acceptance outside [0.1, 0.9] yields a warning.
MetropolisResult sample_metropolis(const TiltedPrior& prior, std::size_t n, std::uint64_t seed,
                                   const MetropolisOptions& options = {});

/// Draws from the prior with the exact sampler when dim == 2, Metropolis otherwise.
Eigen::MatrixXd sample(const TiltedPrior& prior, std::size_t n, std::uint64_t seed);

}  // namespace latf::prior
