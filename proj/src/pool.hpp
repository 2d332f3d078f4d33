#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cluster.hpp"
#include "data.hpp"
#include "impute.hpp"
#include "rng.hpp"

namespace miclust {

// 0/1 co-membership matrix of a partition (diagonal 1).
Eigen::MatrixXd connectivity(const Partition& part);

// Entrywise mean of the members' connectivity matrices.
Eigen::MatrixXd mean_connectivity(const std::vector<Partition>& parts);

// Number of ordered pairs (i, j) on which the two partitions disagree about
// co-membership. Symmetric, zero iff the partitions are equal up to
// relabeling, at most n^2.
double mirkin(const Partition& a, const Partition& b);

// Adjusted Rand index (chance-corrected pair agreement), 1 for identical
// partitions. When the adjustment denominator vanishes (both partitions
// trivial) the index is defined as 1.
double ari(const Partition& a, const Partition& b);

struct ConsensusOptions {
  int max_iter = 500;
  double tol = 1e-7;  // relative objective change
};

struct ConsensusResult {
  Partition partition;
  Eigen::MatrixXd mean_conn;
  double objective = 0.0;   // || mean_conn - connectivity(partition) ||_F^2
  bool nmf_converged = true;
};

// Residual of a candidate partition against a mean connectivity matrix.
double consensus_objective(const Eigen::MatrixXd& mean_conn,
                           const Partition& part);

// Pooled partition: the Frobenius-nearest rank-k connectivity matrix to the
// mean connectivity, found by symmetric NMF (multiplicative updates from a
// k-means start), hardened by row argmax, and polished by greedy reassignment
// moves that keep every cluster occupied. Each input partition also serves as
// a candidate start, so the result never scores worse than the best input.
ConsensusResult consensus(const std::vector<Partition>& parts, int k, Rng& rng,
                          const ConsensusOptions& opts = {});

// Clustering stability of one complete data matrix under a clusterer: b
// rounds, each drawing two bootstrap samples, clustering both, extending to
// the full set (nearest centroid for distance methods with uniform random
// choice on exact ties, posterior argmax for the mixture), and averaging the
// pair disagreement rate mirkin/n^2.
double instability_single(const Eigen::MatrixXd& data,
                          const ClustererSpec& spec, int b, Rng& rng);

// Total instability of an imputed ensemble: mean within-copy instability
// plus mean pairwise between-copy disagreement (including the zero diagonal
// terms of the pair average).
double total_instability(const std::vector<Partition>& parts,
                         const std::vector<double>& within);

struct ChooseKResult {
  std::vector<int> ks;
  std::vector<double> totals;
  int best_k = 0;
};

// Scans K = 2..k_max: re-imputes with the engine at that K, clusters every
// completed copy, measures total instability, and returns the minimizer
// (ties to the smaller K).
ChooseKResult choose_k(const Dataset& ds, Engine engine, ClusterMethod method,
                       int k_max, int m, int b, Rng& rng,
                       const PredictorMatrix& predictors = {});

}  // namespace miclust
