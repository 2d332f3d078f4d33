#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "data.hpp"

namespace miclust {

enum class Engine { jm_gl, jm_norm, fcs_homo, fcs_hetero, fcs_norm };

Engine parse_engine(const std::string& name);
std::string engine_name(Engine e);

// Data-augmentation schedule for the joint-model engines: the chain runs
// burn_in + thin * m iterations and keeps a completed matrix every `thin`
// iterations after warm-up.
struct ChainSpec {
  int m = 20;
  int burn_in = 100;
  int thin = 20;
};

// Chained-equations schedule: m independent chains of `iterations` cycles
// each, one completed matrix per chain.
struct FcsSpec {
  int m = 20;
  int iterations = 200;
  PredictorMatrix predictors;  // empty: all off-diagonal predictors allowed
};

ChainSpec default_chain_spec(Engine e);
FcsSpec default_fcs_spec(Engine e);

// One parameter snapshot per chain iteration, for convergence review.
struct ChainRecord {
  int chain = 0;
  int iteration = 0;
  Eigen::VectorXd theta;   // component shares (empty for class-free engines)
  Eigen::MatrixXd means;   // k x p component means
  double cov_trace = 0.0;  // trace of the (mean) covariance draw
};

struct ImputationResult {
  std::vector<Eigen::MatrixXd> completed;
  std::vector<ChainRecord> diagnostics;
};

// Writes diagnostics as CSV: chain, iteration, theta_*, mean_<w>_<j>, cov_trace.
void save_diagnostics_csv(const ImputationResult& result,
                          const std::string& path);

// Engine dispatch with per-engine schedule defaults; negative schedule
// values select the engine default. k applies to the class-aware engines.
class Rng;
ImputationResult impute(const Dataset& ds, Engine e, int k, int m, Rng& rng,
                        const PredictorMatrix& predictors = {},
                        int burn_in = -1, int thin = -1, int iterations = -1);

}  // namespace miclust
