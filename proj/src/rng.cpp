#include "rng.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace miclust {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += kGolden;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) {
  h ^= v + kGolden + (h << 6) + (h >> 2);
  std::uint64_t x = h;
  return splitmix64(x);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed)
    : seed_(seed), spare_normal_(0.0), have_spare_normal_(false) {
  std::uint64_t x = seed;
  for (auto& s : state_) s = splitmix64(x);
}

Rng Rng::child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t h = seed_;
  h = mix_key(h, a);
  h = mix_key(h, b);
  h = mix_key(h, c);
  return Rng(h);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
  if (n == 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t v = next_u64();
    if (v < limit) return v % n;
  }
}

double Rng::normal() {
  if (have_spare_normal_) {
    have_spare_normal_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  have_spare_normal_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw InvalidArgument("gamma: shape must be > 0");
  if (shape < 1.0) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

double Rng::chi_squared(double df) {
  if (!(df > 0.0)) throw InvalidArgument("chi_squared: df must be > 0");
  return 2.0 * gamma(0.5 * df);
}

Eigen::VectorXd draw_dirichlet(const Eigen::VectorXd& alpha, Rng& rng) {
  const Eigen::Index k = alpha.size();
  if (k == 0) throw InvalidArgument("draw_dirichlet: empty alpha");
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(alpha[i] > 0.0))
      throw InvalidArgument("draw_dirichlet: alpha[" + std::to_string(i) +
                            "] must be > 0");
  }
  Eigen::VectorXd g(k);
  for (Eigen::Index i = 0; i < k; ++i) g[i] = rng.gamma(alpha[i]);
  const double total = g.sum();
  if (total <= 0.0) {
    // All gamma draws underflowed (only possible for very small alphas);
    // fall back to the distribution mean.
    return alpha / alpha.sum();
  }
  return g / total;
}

Eigen::MatrixXd draw_inverse_wishart(double df, const Eigen::MatrixXd& scale,
                                     Rng& rng) {
  const Eigen::Index p = scale.rows();
  if (p == 0 || scale.cols() != p)
    throw InvalidArgument("draw_inverse_wishart: scale must be square");
  if (!(df > static_cast<double>(p) - 1.0))
    throw InvalidArgument("draw_inverse_wishart: df must exceed p - 1");
  const double sym_tol = 1e-10 * std::max(1.0, scale.cwiseAbs().maxCoeff());
  if ((scale - scale.transpose()).cwiseAbs().maxCoeff() > sym_tol)
    throw InvalidArgument("draw_inverse_wishart: scale is not symmetric");

  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw NumericError("draw_inverse_wishart: scale is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  // Bartlett factor T (lower triangular) for Wishart(df, scale^{-1}).
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    T(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) T(i, j) = rng.normal();
  }
  // With A = L^{-T}, the Wishart draw is (A T)(A T)^T and its inverse is
  // C^T C for C = T^{-1} L^T.
  const Eigen::MatrixXd C = T.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd(L.transpose()));
  Eigen::MatrixXd out = C.transpose() * C;
  out = ((out + out.transpose()) * 0.5).eval();
  return out;
}

Eigen::VectorXd draw_mvnormal(const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov, Rng& rng) {
  const Eigen::Index p = mean.size();
  if (cov.rows() != p || cov.cols() != p)
    throw InvalidArgument("draw_mvnormal: cov dimensions do not match mean");
  if (p == 0) throw InvalidArgument("draw_mvnormal: empty mean");
  if (cov.cwiseAbs().maxCoeff() == 0.0) return mean;

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-8 * cov.trace() / static_cast<double>(p);
    Eigen::MatrixXd padded = cov;
    padded.diagonal().array() += jitter;
    llt.compute(padded);
    if (llt.info() != Eigen::Success)
      throw NumericError("draw_mvnormal: covariance is not positive definite");
  }
  Eigen::VectorXd z(p);
  for (Eigen::Index i = 0; i < p; ++i) z[i] = rng.normal();
  return mean + Eigen::MatrixXd(llt.matrixL()) * z;
}

int draw_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  const Eigen::Index k = probs.size();
  if (k == 0) throw InvalidArgument("draw_categorical: empty probabilities");
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!std::isfinite(probs[i]))
      throw NumericError("draw_categorical: non-finite probability at " +
                         std::to_string(i));
    if (probs[i] < 0.0)
      throw InvalidArgument("draw_categorical: negative probability at " +
                            std::to_string(i));
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidArgument("draw_categorical: probabilities sum to " +
                          std::to_string(total) + ", expected 1");
  double u = rng.uniform() * total;
  int last_positive = -1;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (probs[i] > 0.0) last_positive = static_cast<int>(i);
    u -= probs[i];
    if (u < 0.0 && probs[i] > 0.0) return static_cast<int>(i);
  }
  if (last_positive < 0)
    throw NumericError("draw_categorical: no positive probability mass");
  return last_positive;
}

}  // namespace miclust
