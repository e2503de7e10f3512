#include "latf/prior.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace latf::prior {

namespace {

constexpr int kMaxKummerTerms = 200000;

struct ScaledSum {
  double mantissa = 0.0;  // value = mantissa * exp(log_scale)
  double log_scale = 0.0;
};

// Term-ratio summation of M(a, b, z). Terms are kept relative to a running
// exponent so that the partial sums never overflow.
ScaledSum kummer_series(double a, double b, double z) {
  if (!(z >= 0.0)) {
    std::ostringstream msg;
    msg << "kummer_m: z must be >= 0 (got " << z << ")";
    throw std::domain_error(msg.str());
  }
  if (b <= 0.0 && std::floor(b) == b) {
    std::ostringstream msg;
    msg << "kummer_m: b must not be a non-positive integer (got " << b << ")";
    throw std::domain_error(msg.str());
  }
  ScaledSum s;
  s.mantissa = 1.0;
  if (z == 0.0) return s;

  double term = 1.0;
  int quiet = 0;
  for (int n = 0; n < kMaxKummerTerms; ++n) {
    term *= (a + n) / (b + n) * z / (n + 1.0);
    s.mantissa += term;
    if (term == 0.0) return s;  // terminating series (a a non-positive integer)
    if (std::abs(s.mantissa) > 1e250) {
      s.mantissa *= 1e-250;
      term *= 1e-250;
      s.log_scale += 250.0 * std::numbers::ln10;
    }
    // Terms grow until n ~ z; only stop once they shrink below round-off.
    if (n + 1 > z && std::abs(term) <= 1e-17 * std::abs(s.mantissa)) {
      if (++quiet >= 3) return s;
    } else {
      quiet = 0;
    }
  }
  std::ostringstream msg;
  msg << "kummer_m(" << a << ", " << b << ", " << z << ") did not converge within "
      << kMaxKummerTerms << " terms; partial log-sum " << std::log(std::abs(s.mantissa)) + s.log_scale;
  throw std::runtime_error(msg.str());
}

double log_add_exp(double x, double y) {
  const double hi = std::max(x, y);
  const double lo = std::min(x, y);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

double kummer_m(double a, double b, double z) {
  const ScaledSum s = kummer_series(a, b, z);
  if (s.log_scale == 0.0) return s.mantissa;
  return s.mantissa * std::exp(s.log_scale);
}

double log_kummer_m(double a, double b, double z) {
  const ScaledSum s = kummer_series(a, b, z);
  if (!(s.mantissa > 0.0)) {
    throw std::domain_error("log_kummer_m: M(a, b, z) is not positive");
  }
  return std::log(s.mantissa) + s.log_scale;
}

double log_normalization(double tau, double temperature, int dim) {
  if (tau < 0.0) throw std::invalid_argument("tilt tau must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (dim < 1) throw std::invalid_argument("latent dimension must be >= 1");
  const double d = dim;
  const double x = 0.5 * temperature * tau * tau;
  const double first = log_kummer_m(0.5 * d, 0.5, x);
  if (tau == 0.0) return first;
  const double log_gamma_ratio = std::lgamma(0.5 * (d + 1.0)) - std::lgamma(0.5 * d);
  const double second = std::log(tau) + 0.5 * std::log(2.0 * temperature) + log_gamma_ratio +
                        log_kummer_m(0.5 * (d + 1.0), 1.5, x);
  return log_add_exp(first, second);
}

TiltedPrior::TiltedPrior(double tau, int dim, double temperature)
    : tau_(tau), dim_(dim), temperature_(temperature),
      log_z_(log_normalization(tau, temperature, dim)) {}

double TiltedPrior::log_density_norm(double norm) const {
  const double d = dim_;
  return tau_ * norm - 0.5 * norm * norm / temperature_ - log_z_ -
         0.5 * d * std::log(2.0 * std::numbers::pi * temperature_);
}

double TiltedPrior::log_density(const Eigen::VectorXd& z) const {
  if (z.size() != dim_) throw std::invalid_argument("TiltedPrior: point dimension mismatch");
  return log_density_norm(z.norm());
}

double TiltedPrior::log_density_completed_square(const Eigen::VectorXd& z) const {
  if (z.size() != dim_) throw std::invalid_argument("TiltedPrior: point dimension mismatch");
  const double d = dim_;
  const double shifted = z.norm() - temperature_ * tau_;
  return -0.5 * shifted * shifted / temperature_ + 0.5 * temperature_ * tau_ * tau_ - log_z_ -
         0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * d * std::log(temperature_);
}

Eigen::VectorXd TiltedPrior::grad_log_density(const Eigen::VectorXd& z) const {
  const double norm = z.norm();
  Eigen::VectorXd g = -z / temperature_;
  if (norm > 0.0) g += (tau_ / norm) * z;
  return g;
}

Eigen::VectorXd TiltedPrior::log_density_batch(const Eigen::MatrixXd& z) const {
  if (z.rows() != dim_) throw std::invalid_argument("TiltedPrior: batch dimension mismatch");
  Eigen::VectorXd out(z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) out(i) = log_density_norm(z.col(i).norm());
  return out;
}

Eigen::MatrixXd TiltedPrior::grad_log_density_batch(const Eigen::MatrixXd& z) const {
  if (z.rows() != dim_) throw std::invalid_argument("TiltedPrior: batch dimension mismatch");
  Eigen::MatrixXd g = -z / temperature_;
  if (tau_ != 0.0) {
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      const double norm = z.col(i).norm();
      if (norm > 0.0) g.col(i) += (tau_ / norm) * z.col(i);
    }
  }
  return g;
}

namespace {

// Unnormalized radial mass on [0, r] for dim == 2, with the constant factor
// exp(T tau^2 / 2) dropped:
//   int_0^r s exp(-(s - m)^2 / 2T) ds,  m = T tau.
double radial_mass(double m, double temperature, double r) {
  const double root2t = std::sqrt(2.0 * temperature);
  const double gauss = std::sqrt(0.5 * std::numbers::pi * temperature);
  return temperature * (std::exp(-m * m / (2.0 * temperature)) -
                        std::exp(-(r - m) * (r - m) / (2.0 * temperature))) +
         m * gauss * (std::erf((r - m) / root2t) + std::erf(m / root2t));
}

double radial_total(double m, double temperature) {
  const double root2t = std::sqrt(2.0 * temperature);
  const double gauss = std::sqrt(0.5 * std::numbers::pi * temperature);
  return temperature * std::exp(-m * m / (2.0 * temperature)) +
         m * gauss * (1.0 + std::erf(m / root2t));
}

void require_planar(const TiltedPrior& prior, const char* what) {
  if (prior.dim() != 2) {
    throw std::invalid_argument(std::string(what) + " supports only a 2-dimensional latent space");
  }
}

}  // namespace

double radial_cdf(const TiltedPrior& prior, double r) {
  require_planar(prior, "radial_cdf");
  if (r <= 0.0) return 0.0;
  const double m = prior.mode_radius();
  return radial_mass(m, prior.temperature(), r) / radial_total(m, prior.temperature());
}

double radial_density(const TiltedPrior& prior, double r) {
  require_planar(prior, "radial_density");
  if (r < 0.0) return 0.0;
  const double m = prior.mode_radius();
  const double t = prior.temperature();
  return r * std::exp(-(r - m) * (r - m) / (2.0 * t)) / radial_total(m, t);
}

namespace {

double invert_radial_cdf(const TiltedPrior& prior, double u) {
  const double m = prior.mode_radius();
  const double t = prior.temperature();
  double lo = 0.0;
  double hi = m + 40.0 * std::sqrt(t);
  double r = std::max(m, std::sqrt(t));
  for (int it = 0; it < 200; ++it) {
    const double f = radial_cdf(prior, r) - u;
    if (f > 0.0) {
      hi = r;
    } else {
      lo = r;
    }
    const double dens = radial_density(prior, r);
    double next = dens > 0.0 ? r - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 1e-14 * std::max(1.0, r) || hi - lo <= 1e-15 * std::max(1.0, hi)) {
      return next;
    }
    r = next;
  }
  return r;
}

}  // namespace

Eigen::MatrixXd sample_exact(const TiltedPrior& prior, std::size_t n, std::uint64_t seed) {
  if (prior.dim() != 2) {
    throw std::invalid_argument("sample_exact: unsupported latent dimension " +
                                std::to_string(prior.dim()) + " (use sample_metropolis)");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    const double r = invert_radial_cdf(prior, u);
    out(0, static_cast<Eigen::Index>(i)) = r * std::cos(angle);
    out(1, static_cast<Eigen::Index>(i)) = r * std::sin(angle);
  }
  return out;
}

MetropolisResult sample_metropolis(const TiltedPrior& prior, std::size_t n, std::uint64_t seed,
                                   const MetropolisOptions& options) {
  if (options.thinning == 0) throw std::invalid_argument("Metropolis thinning must be >= 1");
  if (!(options.step_scale > 0.0)) throw std::invalid_argument("Metropolis step scale must be > 0");
  const int dim = prior.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  x(0) = prior.mode_radius();
  double log_p = prior.log_density(x);
  double step = options.step_scale;
  Eigen::VectorXd proposal(dim);

  auto propose = [&]() {
    for (int k = 0; k < dim; ++k) proposal(k) = x(k) + step * normal(rng);
    const double log_q = prior.log_density(proposal);
    if (std::log(unit(rng)) < log_q - log_p) {
      x = proposal;
      log_p = log_q;
      return true;
    }
    return false;
  };

  constexpr std::size_t kTuneWindow = 100;
  std::size_t window_accepts = 0;
  for (std::size_t i = 0; i < options.burn_in; ++i) {
    if (propose()) ++window_accepts;
    if (options.tune && (i + 1) % kTuneWindow == 0) {
      const double rate = static_cast<double>(window_accepts) / kTuneWindow;
      step *= std::exp(2.0 * (rate - options.target_acceptance));
      window_accepts = 0;
    }
  }

  MetropolisResult result;
  result.samples.resize(dim, static_cast<Eigen::Index>(n));
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < options.thinning; ++k) {
      if (propose()) ++accepted;
    }
    result.samples.col(static_cast<Eigen::Index>(i)) = x;
  }
  const double total = static_cast<double>(n * options.thinning);
  result.acceptance_rate = total > 0 ? accepted / total : 0.0;
  result.step_scale = step;
  if (n > 0 && (result.acceptance_rate < 0.1 || result.acceptance_rate > 0.9)) {
    std::ostringstream msg;
    msg << "Metropolis acceptance rate " << result.acceptance_rate << " outside [0.1, 0.9] with step "
        << step << "; " << (result.acceptance_rate < 0.1 ? "decrease" : "increase")
        << " the step scale or enable tuning";
    result.warning = msg.str();
  }
  return result;
}

Eigen::MatrixXd sample(const TiltedPrior& prior, std::size_t n, std::uint64_t seed) {
  if (prior.dim() == 2) return sample_exact(prior, n, seed);
  return sample_metropolis(prior, n, seed).samples;
}

}  // namespace latf::prior
