#pragma once

#include "impute.hpp"
#include "rng.hpp"

namespace miclust {

// One Bayesian linear regression draw: chi-squared residual degrees of
// freedom give sigma, then beta is drawn around the least-squares solution
// with covariance sigma^2 (X^T X)^{-1}. Requires rows(X) > cols(X); a
// rank-deficient normal matrix gets one ridge fallback before NumericError.
struct RegressionDraw {
  Eigen::VectorXd beta;
  double sigma = 0.0;
};

RegressionDraw draw_blr(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                        Rng& rng);

// Chained-equations multiple imputation with a mixture working model whose
// covariance is pooled across components. Each cycle regresses every
// incomplete column on the component indicator plus the allowed predictor
// columns (observed rows only), redraws the missing cells, then refreshes
// the component labels from a mixture fit on a bootstrap of the completed
// data. m independent chains run `iterations` cycles each.
ImputationResult fcs_homo_impute(const Dataset& ds, int k, const FcsSpec& spec,
                                 Rng& rng);

// Same scheme with one regression and one covariance per component. A
// component with fewer observed rows than needed for its regression borrows
// the pooled draw for that column.
ImputationResult fcs_hetero_impute(const Dataset& ds, int k,
                                   const FcsSpec& spec, Rng& rng);

// Class-free chained equations: each incomplete column is regressed on an
// intercept plus the allowed predictors. Equals fcs_hetero_impute with
// k = 1 draw for draw when given the same seed.
ImputationResult fcs_norm_impute(const Dataset& ds, const FcsSpec& spec,
                                 Rng& rng);

}  // namespace miclust
