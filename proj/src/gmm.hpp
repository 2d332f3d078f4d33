#pragma once

#include <Eigen/Dense>
#include <vector>

#include "data.hpp"
#include "rng.hpp"

namespace miclust {

// Covariance structure of a Gaussian mixture: one matrix pooled across all
// components, or one matrix per component.
enum class CovModel { shared, per_cluster };

struct MixtureModel {
  Eigen::VectorXd weights;             // k, on the simplex
  std::vector<Eigen::VectorXd> means;  // k vectors of length p
  std::vector<Eigen::MatrixXd> covs;   // 1 (shared) or k matrices
  CovModel cov_model = CovModel::shared;

  int k() const { return static_cast<int>(means.size()); }
  int p() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  const Eigen::MatrixXd& cov(int w) const {
    return cov_model == CovModel::shared ? covs[0] : covs[w];
  }
};

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-6;  // relative observed-data log-likelihood change
  int restarts = 5;
  // When set, a single run starts from these parameters instead of seeded
  // restarts.
  const MixtureModel* warm_start = nullptr;
  // When set, receives the winning run's log-likelihood trajectory.
  std::vector<double>* loglik_trace = nullptr;
};

// Maximum-likelihood mixture fit on complete data. Restarts are seeded by
// k-means++ hard assignments; the best final log-likelihood wins. Component
// covariances are floored with 1e-6 times their mean diagonal when they lose
// positive definiteness; a component whose soft count empties is re-seeded
// at the row the model explains worst. Throws DegenerateFit for k < 1,
// n <= k, or all-identical rows.
MixtureModel em_fit(const Eigen::MatrixXd& data, int k, CovModel cov_model,
                    Rng& rng, const EmOptions& opts = {});

// Posterior component-membership probabilities for one row restricted to its
// observed coordinates (observed[j] true = coordinate j available). With no
// observed coordinate the weights are returned. Computed through log-space
// softmax, so extreme densities cannot overflow. A singular restricted
// covariance raises NumericError carrying the component index (-1 for a
// shared covariance).
Eigen::VectorXd discriminant_scores(const MixtureModel& model,
                                    const Eigen::VectorXd& row,
                                    const std::vector<bool>& observed);

// Hard assignment of complete rows to the highest-posterior component, ties
// to the lowest index.
Partition classify(const MixtureModel& model, const Eigen::MatrixXd& data);

// Observed-data log-likelihood of complete rows under the model.
double mixture_loglik(const MixtureModel& model, const Eigen::MatrixXd& data);

// Draws the missing coordinates of a row from their conditional Gaussian
// given the observed coordinates under component `component`. Rows with no
// missing coordinates are returned unchanged.
Eigen::VectorXd draw_conditional_missing(const MixtureModel& model,
                                         const Eigen::VectorXd& row,
                                         const std::vector<bool>& observed,
                                         int component, Rng& rng);

// Adds an escalating diagonal floor until the matrix admits a Cholesky
// factorization; throws NumericError(component) when even that fails.
void ensure_spd(Eigen::MatrixXd& m, int component = -1);

// k-means++ seeding: k distinct row indices, new centers drawn with
// probability proportional to squared distance from the chosen set.
std::vector<int> kmeanspp_rows(const Eigen::MatrixXd& data, int k, Rng& rng);

}  // namespace miclust
