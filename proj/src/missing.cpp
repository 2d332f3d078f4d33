#include "missing.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace miclust {

double normal_cdf(double x) {
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double calibrate_intercept(const Eigen::VectorXd& driver, double tau) {
  if (driver.size() == 0)
    throw InvalidArgument("calibrate_intercept: empty driver column");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw InvalidArgument("calibrate_intercept: tau must lie in [0, 1]");
  const auto mean_prob = [&](double a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < driver.size(); ++i)
      s += normal_cdf(a + driver[i]);
    return s / static_cast<double>(driver.size());
  };
  double lo = -12.0, hi = 12.0;
  double flo = mean_prob(lo) - tau;
  double fhi = mean_prob(hi) - tau;
  if (flo > 1e-4 || fhi < -1e-4)
    throw CalibrationError(
        "calibrate_intercept: target fraction " + std::to_string(tau) +
        " is unreachable for this driver column within the intercept bracket");
  if (std::abs(flo) <= 1e-4) return lo;
  if (std::abs(fhi) <= 1e-4) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = mean_prob(mid) - tau;
    if (std::abs(fm) <= 1e-4) return mid;
    if (fm < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

Dataset ampute(const Dataset& ds, const MechanismSpec& spec, Rng& rng) {
  validate_dataset(ds, "ampute");
  if (!ds.complete())
    throw InvalidArgument("ampute: input dataset already has missing cells");
  if (!(spec.tau >= 0.0 && spec.tau < 1.0))
    throw InvalidArgument("ampute: tau must lie in [0, 1)");
  const Eigen::Index n = ds.n();
  const Eigen::Index p = ds.p();
  if (spec.kind == Mechanism::mar) {
    if (spec.driver_col < 0 || spec.driver_col >= p)
      throw InvalidArgument("ampute: driver column " +
                            std::to_string(spec.driver_col) +
                            " outside [0, " + std::to_string(p) + ")");
    if (p < 2)
      throw InvalidArgument("ampute: mar needs at least two columns");
  }

  Dataset out = ds;
  if (spec.tau == 0.0) return out;

  Eigen::VectorXd row_prob = Eigen::VectorXd::Constant(n, spec.tau);
  if (spec.kind == Mechanism::mar) {
    const Eigen::VectorXd driver = ds.values.col(spec.driver_col);
    const double a = calibrate_intercept(driver, spec.tau);
    for (Eigen::Index i = 0; i < n; ++i)
      row_prob[i] = normal_cdf(a + driver[i]);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (spec.kind == Mechanism::mar && j == spec.driver_col) continue;
      if (rng.uniform() < row_prob[i]) {
        out.mask(i, j) = false;
        out.values(i, j) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  // No row may end up fully missing (only possible under mcar, since mar
  // keeps the driver column observed).
  for (Eigen::Index i = 0; i < n; ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < p; ++j) any = any || out.mask(i, j);
    if (any) continue;
    const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform_index(p));
    out.mask(i, j) = true;
    out.values(i, j) = ds.values(i, j);
  }
  return out;
}

double masked_fraction(const Dataset& ds, const MechanismSpec& spec) {
  Eigen::Index eligible = 0, masked = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    for (Eigen::Index j = 0; j < ds.p(); ++j) {
      if (spec.kind == Mechanism::mar && j == spec.driver_col) continue;
      ++eligible;
      if (!ds.mask(i, j)) ++masked;
    }
  if (eligible == 0) return 0.0;
  return static_cast<double>(masked) / static_cast<double>(eligible);
}

}  // namespace miclust
