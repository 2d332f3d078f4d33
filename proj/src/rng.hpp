#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace miclust {

// Deterministic 64-bit generator (xoshiro256** seeded through splitmix64).
// Streams are reproducible across platforms: the same seed and the same call
// sequence give bit-identical draws. `child` derives an independent substream
// from the parent's seed and up to three key words; derived streams do not
// consume state from the parent, so unrelated stages of an algorithm can be
// keyed separately and stay aligned even when some stages are skipped.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Substream keyed by (a, b, c). Pure function of the parent's seed.
  Rng child(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Integer uniform on [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal (Marsaglia polar, second value cached).
  double normal();

  // Gamma(shape, 1), shape > 0 (Marsaglia-Tsang; shape < 1 boosted).
  double gamma(double shape);

  // Chi-squared with df > 0 degrees of freedom.
  double chi_squared(double df);

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  double spare_normal_;
  bool have_spare_normal_;
};

// Dirichlet draw; every component of alpha must be > 0. The result lies on
// the simplex (non-negative, sums to 1 up to rounding).
Eigen::VectorXd draw_dirichlet(const Eigen::VectorXd& alpha, Rng& rng);

// Inverse-Wishart draw via the Bartlett decomposition. Requires df > p - 1
// and a symmetric positive definite p x p scale. The mean of the
// distribution is scale / (df - p - 1) when df > p + 1.
Eigen::MatrixXd draw_inverse_wishart(double df, const Eigen::MatrixXd& scale,
                                     Rng& rng);

// Multivariate normal draw through the Cholesky factor of cov. A zero
// covariance returns the mean exactly. If the factorization fails, a jitter
// of 1e-8 * trace(cov)/p is added to the diagonal once before giving up.
Eigen::VectorXd draw_mvnormal(const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov, Rng& rng);

// Categorical draw over probs (non-negative, summing to 1 within 1e-9).
// Returns an index in [0, probs.size()).
int draw_categorical(const Eigen::VectorXd& probs, Rng& rng);

}  // namespace miclust
