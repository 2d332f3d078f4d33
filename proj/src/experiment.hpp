#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cluster.hpp"
#include "data.hpp"
#include "impute.hpp"
#include "missing.hpp"
#include "rng.hpp"

namespace miclust {

// Per-cluster covariance shape of the simulation models: the identity, or a
// block matrix pairing an identity 4-block with a constant-correlation
// 4-block at +rho or -rho.
enum class CovKind { identity8, sigma_rho, sigma_neg_rho };

// One of the eleven synthetic mixture configurations (three clusters of 250
// at separation 2 with correlated tails in the base case; the others vary
// separation, cluster count, sizes, balance, and covariance heterogeneity).
struct SimModelSpec {
  std::string model_id;  // roman numeral, "I" through "XI"
  int k = 3;
  std::vector<int> sizes;
  double delta = 2.0;
  double rho = 0.3;
  std::vector<CovKind> cov_kinds;  // one entry per cluster
};

// Looks up the configuration table row; accepts lower or upper case.
SimModelSpec build_model_spec(const std::string& model_id);

// Component mean in 8 dimensions: 0 -> (0,0,0,0,d,d,0,d^2),
// 1 -> (0,0,0,0,-d,-d,-d,0), 2 -> (0,0,0,0,-d,d,d,-d^2), 3 -> minus the
// third (used by the four-cluster model).
Eigen::VectorXd model_mean(int component, double delta);

// 8x8 covariance for one cluster.
Eigen::MatrixXd model_covariance(CovKind kind, double rho);

// Draws sizes[w] rows from N(mean_w, cov_w) per cluster, stacked in cluster
// order, and stores the generating component as ref_labels.
Dataset generate_model(const SimModelSpec& spec, Rng& rng);

struct Summary {
  int count = 0;
  double median = std::numeric_limits<double>::quiet_NaN();
  double iqr = std::numeric_limits<double>::quiet_NaN();
};

// Linear-interpolation quantile of an ascending vector: index h = (n-1)p,
// value interpolated between the bracketing order statistics.
double quantile_interpolated(const std::vector<double>& sorted_values,
                             double prob);

// Count, midpoint median, and interquartile range. Throws InvalidArgument on
// an empty vector.
Summary summarize(std::vector<double> values);

// Everything one experiment cell needs: a data source (synthetic model or a
// CSV on disk), an amputation mechanism (tau = 0 means the full-data
// control), an imputation engine, the clusterer, and the replicate count.
struct ExperimentSpec {
  SimModelSpec model;
  std::string input_csv;  // when set, replaces synthetic generation
  std::string label_column = "label";
  std::string na_token = "NA";

  MechanismSpec mechanism;

  Engine engine = Engine::jm_gl;
  bool external = false;      // completed copies come from external_dir
  std::string external_dir;
  int m = 20;
  int fcs_iterations = -1;  // negative: engine default
  int burn_in = -1;
  int thin = -1;
  PredictorMatrix predictors;

  ClustererSpec clusterer;

  int replicates = 1;
  int stability_rounds = 0;  // 0: skip the total-instability column
  std::uint64_t master_seed = 1;
  int threads = 1;
};

struct ReplicateRow {
  int replicate = 0;
  std::string engine;
  std::string mechanism;
  double tau = 0.0;
  std::string clusterer;
  int k = 0;
  double ari = std::numeric_limits<double>::quiet_NaN();
  double total_instability = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct ExperimentResult {
  std::vector<ReplicateRow> rows;
  Summary ari_summary;  // over successful replicates only
};

// Runs every replicate through generate (or load) -> amputate -> impute ->
// cluster each copy -> pool -> score against the reference labels. A failed
// chain or degenerate fit marks its row and the sweep continues. Replicate r
// draws all randomness from substreams keyed by r, so results do not depend
// on the thread count and removing other replicates changes nothing.
ExperimentResult run_experiment(const ExperimentSpec& spec);

void save_results_csv(const std::vector<ReplicateRow>& rows,
                      const std::string& path);

void save_summary_csv(const ExperimentSpec& spec, const ExperimentResult& res,
                      const std::string& path);

struct ExperimentConfig {
  ExperimentSpec spec;
  std::string results_csv = "results.csv";
  std::string summary_csv = "summary.csv";
};

// Flat key=value file, one pair per line, '#' lines and blank lines skipped.
// Keys: model_id, input_csv, label_column, na_token, tau, mechanism,
// driver_col (1-based), engine, external_dir, clusterer, cov_model, k, m, l,
// burn_in, thin, predictors_csv, standardize, replicates, stability_rounds,
// seed, threads, results_csv, summary_csv. Unknown keys and malformed values
// raise ParseError with the line number.
ExperimentConfig parse_experiment_config_text(const std::string& text);
ExperimentConfig parse_experiment_config(const std::string& path);

}  // namespace miclust
