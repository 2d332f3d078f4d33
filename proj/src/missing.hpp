#pragma once

#include <Eigen/Dense>

#include "data.hpp"
#include "rng.hpp"

namespace miclust {

enum class Mechanism { mcar, mar };

// Cell-deletion plan. Under mcar every cell is masked independently with
// probability tau. Under mar the cells of row i (outside the driver column,
// which is never masked) are masked with probability Phi(a + x_{i,driver}),
// where the intercept a is calibrated so the expected masked fraction over
// eligible cells equals tau.
struct MechanismSpec {
  Mechanism kind = Mechanism::mcar;
  double tau = 0.25;
  int driver_col = 0;  // used by mar only
};

double normal_cdf(double x);

// Solves (1/n) sum_i Phi(a + x_i) = tau for a by bisection on [-12, 12] to
// within 1e-4 on the mean probability. Throws CalibrationError when tau is
// unreachable inside the bracket.
double calibrate_intercept(const Eigen::VectorXd& driver, double tau);

// Applies the mechanism to a complete dataset and returns the masked copy
// (values of masked cells become NaN). Any row left with no observed cell
// has one uniformly chosen cell restored. ref_labels pass through untouched.
Dataset ampute(const Dataset& ds, const MechanismSpec& spec, Rng& rng);

// Fraction of masked cells among eligible cells (all cells under mcar,
// non-driver cells under mar).
double masked_fraction(const Dataset& ds, const MechanismSpec& spec);

}  // namespace miclust
