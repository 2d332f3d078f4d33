#pragma once

#include <Eigen/Dense>

#include "data.hpp"
#include "gmm.hpp"
#include "rng.hpp"

namespace miclust {

enum class ClusterMethod { kmeans, pam, ward, mixture };

ClusterMethod parse_cluster_method(const std::string& name);
std::string cluster_method_name(ClusterMethod m);

// How complete data is partitioned. Distance methods standardize by default;
// the mixture method works on the raw scale.
struct ClustererSpec {
  ClusterMethod method = ClusterMethod::kmeans;
  int k = 3;
  CovModel cov_model = CovModel::shared;  // mixture only
  bool standardize = true;
};

ClustererSpec make_clusterer_spec(ClusterMethod method, int k);

// Centers and scales every column ((x - mean) / sd, sd with n - 1). A
// zero-variance column raises InvalidArgument naming the column.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& data);

// Lloyd iterations from k-means++ starts (10 restarts, best within-cluster
// sum of squares wins). An emptied cluster is re-seeded at the point
// farthest from its assigned centroid. Ties go to the lowest index.
Partition kmeans(const Eigen::MatrixXd& data, int k, Rng& rng);

double kmeans_wcss(const Eigen::MatrixXd& data, const Partition& part);

// Partitioning around medoids with Euclidean distances: greedy BUILD, then
// steepest-descent SWAP until no exchange lowers the total cost.
// medoids_out, when given, receives the k chosen row indices in ascending
// order.
Partition pam(const Eigen::MatrixXd& data, int k, Rng& rng,
              std::vector<int>* medoids_out = nullptr);

// Ward agglomeration (nearest-neighbor chain on squared Euclidean
// distances), cut at the k-cluster level of the finished dendrogram (the
// n - k cheapest merges, ties by merge order). Labels follow first-row
// order. merge_heights, when given, receives all n - 1 merge costs in the
// order the chain performed them.
Partition ward_hclust(const Eigen::MatrixXd& data, int k,
                      std::vector<double>* merge_heights = nullptr);

// Mixture fit plus posterior hard assignment.
Partition mixture_cluster(const Eigen::MatrixXd& data, int k,
                          CovModel cov_model, Rng& rng);

// Applies the spec (standardizing first when requested).
Partition run_clusterer(const Eigen::MatrixXd& data, const ClustererSpec& spec,
                        Rng& rng);

}  // namespace miclust
