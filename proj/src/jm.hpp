#pragma once

#include "impute.hpp"
#include "rng.hpp"

namespace miclust {

// Multiple imputation under a joint mixture model with a shared covariance,
// fit by data augmentation. Each sweep alternates an imputation step
// (component labels and missing cells drawn row by row from their
// conditional distributions) with a posterior step (component shares from a
// Dirichlet, the covariance from an inverse-Wishart on the residual
// cross-product with n - p degrees of freedom, component means from
// Gaussians around the class means). Completed matrices are kept on the
// thinned schedule of `spec`. Requires every row to keep at least one
// observed cell and n > p + k; persistent numerical breakdown raises
// ChainFailure.
ImputationResult jm_gl_impute(const Dataset& ds, int k, const ChainSpec& spec,
                              Rng& rng);

// Single-component special case: imputation under one multivariate normal.
// Identical to jm_gl_impute with k = 1, including the random stream.
ImputationResult jm_norm_impute(const Dataset& ds, const ChainSpec& spec,
                                Rng& rng);

}  // namespace miclust
