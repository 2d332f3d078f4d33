#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "data.hpp"
#include "errors.hpp"
#include "missing.hpp"
#include "rng.hpp"

using namespace miclust;

namespace {

Dataset gaussian_dataset(int n, int p, Rng& rng) {
  Eigen::MatrixXd values(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) values(i, j) = rng.normal();
  return make_dataset(values);
}

}  // namespace

TEST_CASE("intercept calibration hits known targets") {
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(50);
  CHECK(std::abs(calibrate_intercept(zeros, 0.5)) < 2e-4);
  // Quantile of the standard normal at 0.25.
  CHECK(calibrate_intercept(zeros, 0.25) ==
        doctest::Approx(-0.6744898).epsilon(2e-3));
}

TEST_CASE("calibration is self-consistent on random drivers") {
  Rng rng(17);
  Eigen::VectorXd driver(100000);
  for (Eigen::Index i = 0; i < driver.size(); ++i) driver[i] = rng.normal();
  const double a = calibrate_intercept(driver, 0.4);
  double mean = 0.0;
  for (Eigen::Index i = 0; i < driver.size(); ++i)
    mean += normal_cdf(a + driver[i]);
  mean /= static_cast<double>(driver.size());
  CHECK(mean > 0.399);
  CHECK(mean < 0.401);
}

TEST_CASE("unreachable targets raise CalibrationError") {
  // All drivers at +40: Phi(a + 40) is 1 for every a in the bracket.
  const Eigen::VectorXd high = Eigen::VectorXd::Constant(10, 40.0);
  CHECK_THROWS_AS(calibrate_intercept(high, 0.25), CalibrationError);
}

TEST_CASE("mcar masks close to the target fraction") {
  Rng rng(23);
  Dataset ds = gaussian_dataset(400, 8, rng);
  MechanismSpec spec;
  spec.tau = 0.25;
  Rng amp_rng = rng.child(1);
  const Dataset masked = ampute(ds, spec, amp_rng);
  const double frac = masked_fraction(masked, spec);
  CHECK(std::abs(frac - 0.25) < 0.02);
  // Observed cells keep their values.
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    for (Eigen::Index j = 0; j < ds.p(); ++j)
      if (masked.mask(i, j)) CHECK(masked.values(i, j) == ds.values(i, j));
}

TEST_CASE("tau zero leaves the dataset untouched") {
  Rng rng(29);
  Dataset ds = gaussian_dataset(50, 3, rng);
  MechanismSpec spec;
  spec.tau = 0.0;
  Rng amp_rng = rng.child(1);
  const Dataset masked = ampute(ds, spec, amp_rng);
  CHECK(masked.complete());
  CHECK(masked.values == ds.values);
}

TEST_CASE("no row is left fully missing") {
  Rng rng(31);
  Dataset ds = gaussian_dataset(300, 2, rng);
  MechanismSpec spec;
  spec.tau = 0.85;
  Rng amp_rng = rng.child(1);
  const Dataset masked = ampute(ds, spec, amp_rng);
  for (Eigen::Index i = 0; i < masked.n(); ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < masked.p(); ++j) any = any || masked.mask(i, j);
    CHECK(any);
  }
}

TEST_CASE("mar never masks the driver column and tracks the target rate") {
  Rng rng(37);
  Dataset ds = gaussian_dataset(500, 6, rng);
  MechanismSpec spec;
  spec.kind = Mechanism::mar;
  spec.tau = 0.4;
  spec.driver_col = 2;
  Rng amp_rng = rng.child(1);
  const Dataset masked = ampute(ds, spec, amp_rng);
  for (Eigen::Index i = 0; i < masked.n(); ++i) CHECK(masked.mask(i, 2));
  CHECK(std::abs(masked_fraction(masked, spec) - 0.4) < 0.02);
}

TEST_CASE("mar missingness increases with the driver value") {
  Rng rng(41);
  Dataset ds = gaussian_dataset(2000, 4, rng);
  MechanismSpec spec;
  spec.kind = Mechanism::mar;
  spec.tau = 0.3;
  spec.driver_col = 0;
  Rng amp_rng = rng.child(1);
  const Dataset masked = ampute(ds, spec, amp_rng);

  // Split rows at the driver median and compare masked fractions.
  std::vector<double> driver(ds.values.col(0).data(),
                             ds.values.col(0).data() + ds.n());
  std::sort(driver.begin(), driver.end());
  const double median = driver[driver.size() / 2];
  double low_masked = 0, low_total = 0, high_masked = 0, high_total = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const bool high = ds.values(i, 0) > median;
    for (Eigen::Index j = 1; j < ds.p(); ++j) {
      (high ? high_total : low_total) += 1;
      if (!masked.mask(i, j)) (high ? high_masked : low_masked) += 1;
    }
  }
  CHECK(high_masked / high_total > low_masked / low_total + 0.1);
}

TEST_CASE("amputation refuses incomplete input and bad parameters") {
  Rng rng(43);
  Dataset ds = gaussian_dataset(20, 3, rng);
  ds.values(0, 0) = std::nan("");
  ds.mask(0, 0) = false;
  MechanismSpec spec;
  Rng amp_rng = rng.child(1);
  CHECK_THROWS_AS(ampute(ds, spec, amp_rng), InvalidArgument);

  Dataset ok = gaussian_dataset(20, 3, rng);
  spec.tau = 1.0;
  CHECK_THROWS_AS(ampute(ok, spec, amp_rng), InvalidArgument);
  spec.tau = 0.2;
  spec.kind = Mechanism::mar;
  spec.driver_col = 7;
  CHECK_THROWS_AS(ampute(ok, spec, amp_rng), InvalidArgument);
}

TEST_CASE("amputation is deterministic for a fixed stream") {
  Rng rng(47);
  Dataset ds = gaussian_dataset(100, 4, rng);
  MechanismSpec spec;
  spec.tau = 0.3;
  Rng a = rng.child(9);
  Rng b = rng.child(9);
  const Dataset m1 = ampute(ds, spec, a);
  const Dataset m2 = ampute(ds, spec, b);
  CHECK((m1.mask == m2.mask).all());
}
