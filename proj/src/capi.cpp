#include "miclust.h"

#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cluster.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "impute.hpp"
#include "missing.hpp"
#include "pool.hpp"
#include "rng.hpp"

struct mic_dataset {
  miclust::Dataset ds;
};

struct mic_imputation {
  miclust::ImputationResult res;
  int p = 0;
};

struct mic_partition {
  miclust::Partition part;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

// Runs `body` and folds the library exception hierarchy onto status codes.
template <typename Fn>
int guarded(Fn&& body) {
  try {
    const int code = body();
    if (code == MIC_OK) g_last_error.clear();
    return code;
  } catch (const miclust::ParseError& e) {
    return fail(MIC_ERR_PARSE, e.what());
  } catch (const miclust::ChainFailure& e) {
    return fail(MIC_ERR_CHAIN_FAILURE, e.what());
  } catch (const miclust::DegenerateFit& e) {
    return fail(MIC_ERR_CHAIN_FAILURE, e.what());
  } catch (const miclust::NumericError& e) {
    return fail(MIC_ERR_CHAIN_FAILURE, e.what());
  } catch (const miclust::InvalidArgument& e) {
    return fail(MIC_ERR_INVALID, e.what());
  } catch (const miclust::CalibrationError& e) {
    return fail(MIC_ERR_INVALID, e.what());
  } catch (const miclust::IoError& e) {
    return fail(MIC_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(MIC_ERR_UNKNOWN, e.what());
  } catch (...) {
    return fail(MIC_ERR_UNKNOWN, "unknown failure");
  }
}

int require(bool ok, const char* msg) {
  if (ok) return MIC_OK;
  throw miclust::InvalidArgument(msg);
}

std::string str_or(const char* s, const char* fallback) {
  return s != nullptr ? std::string(s) : std::string(fallback);
}

miclust::ClustererSpec build_clusterer(const char* method, int k,
                                       const char* cov_model,
                                       int standardize) {
  require(method != nullptr, "method must not be NULL");
  miclust::ClustererSpec spec =
      miclust::make_clusterer_spec(miclust::parse_cluster_method(method), k);
  if (cov_model != nullptr && cov_model[0] != '\0') {
    const std::string cm(cov_model);
    if (cm == "shared")
      spec.cov_model = miclust::CovModel::shared;
    else if (cm == "per_cluster")
      spec.cov_model = miclust::CovModel::per_cluster;
    else
      throw miclust::InvalidArgument("unknown covariance model '" + cm + "'");
  }
  if (standardize >= 0) spec.standardize = standardize != 0;
  return spec;
}

miclust::PredictorMatrix load_predictors(const char* path) {
  if (path == nullptr || path[0] == '\0') return {};
  return miclust::load_predictor_csv(path);
}

}  // namespace

extern "C" {

const char* mic_version(void) { return "1.0.0"; }

const char* mic_last_error(void) { return g_last_error.c_str(); }

int mic_dataset_create(long long n, long long p, const double* values,
                       mic_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be NULL");
    require(values != nullptr, "values must not be NULL");
    require(n > 0 && p > 0, "n and p must be positive");
    Eigen::MatrixXd m(n, p);
    for (long long i = 0; i < n; ++i)
      for (long long j = 0; j < p; ++j) m(i, j) = values[i * p + j];
    miclust::Dataset ds = miclust::make_dataset(m);
    for (long long i = 0; i < n; ++i)
      for (long long j = 0; j < p; ++j)
        if (std::isnan(m(i, j))) ds.mask(i, j) = false;
    *out = new mic_dataset{std::move(ds)};
    return MIC_OK;
  });
}

int mic_dataset_load(const char* path, const char* na_token,
                     const char* label_column, mic_dataset** out) {
  return guarded([&] {
    require(out != nullptr && path != nullptr, "path and out must not be NULL");
    *out = new mic_dataset{miclust::load_csv(path, str_or(na_token, "NA"),
                                             str_or(label_column, ""))};
    return MIC_OK;
  });
}

int mic_dataset_save(const mic_dataset* ds, const char* path,
                     const char* na_token) {
  return guarded([&] {
    require(ds != nullptr && path != nullptr, "ds and path must not be NULL");
    miclust::save_csv(ds->ds, path, str_or(na_token, "NA"));
    return MIC_OK;
  });
}

int mic_dataset_simulate(const char* model_id, unsigned long long seed,
                         mic_dataset** out) {
  return guarded([&] {
    require(out != nullptr && model_id != nullptr,
            "model_id and out must not be NULL");
    miclust::Rng rng(seed);
    *out = new mic_dataset{
        miclust::generate_model(miclust::build_model_spec(model_id), rng)};
    return MIC_OK;
  });
}

int mic_dataset_ampute(const mic_dataset* ds, const char* mechanism,
                       double tau, int driver_col, unsigned long long seed,
                       mic_dataset** out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr && mechanism != nullptr,
            "ds, mechanism and out must not be NULL");
    miclust::MechanismSpec spec;
    spec.tau = tau;
    const std::string kind(mechanism);
    if (kind == "mcar") {
      spec.kind = miclust::Mechanism::mcar;
    } else if (kind == "mar") {
      spec.kind = miclust::Mechanism::mar;
      require(driver_col >= 1, "driver_col must be at least 1 for mar");
      spec.driver_col = driver_col - 1;
    } else {
      throw miclust::InvalidArgument("unknown mechanism '" + kind + "'");
    }
    miclust::Rng rng(seed);
    *out = new mic_dataset{miclust::ampute(ds->ds, spec, rng)};
    return MIC_OK;
  });
}

long long mic_dataset_rows(const mic_dataset* ds) {
  return ds == nullptr ? 0 : static_cast<long long>(ds->ds.n());
}

long long mic_dataset_cols(const mic_dataset* ds) {
  return ds == nullptr ? 0 : static_cast<long long>(ds->ds.p());
}

double mic_dataset_value(const mic_dataset* ds, long long i, long long j) {
  if (ds == nullptr || i < 0 || j < 0 || i >= ds->ds.n() || j >= ds->ds.p())
    return std::numeric_limits<double>::quiet_NaN();
  return ds->ds.values(i, j);
}

int mic_dataset_observed(const mic_dataset* ds, long long i, long long j) {
  if (ds == nullptr || i < 0 || j < 0 || i >= ds->ds.n() || j >= ds->ds.p())
    return 0;
  return ds->ds.mask(i, j) ? 1 : 0;
}

int mic_dataset_has_labels(const mic_dataset* ds) {
  return ds != nullptr && ds->ds.ref_labels.has_value() ? 1 : 0;
}

int mic_dataset_labels(const mic_dataset* ds, mic_partition** out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "ds and out must not be NULL");
    require(ds->ds.ref_labels.has_value(), "dataset has no reference labels");
    *out = new mic_partition{*ds->ds.ref_labels};
    return MIC_OK;
  });
}

void mic_dataset_free(mic_dataset* ds) { delete ds; }

int mic_impute(const mic_dataset* ds, const char* engine, int k, int m,
               long long burn_in, long long thin, long long iterations,
               const char* predictors_csv, unsigned long long seed,
               mic_imputation** out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr && engine != nullptr,
            "ds, engine and out must not be NULL");
    miclust::Rng rng(seed);
    auto* imp = new mic_imputation;
    try {
      imp->res = miclust::impute(ds->ds, miclust::parse_engine(engine), k, m,
                                 rng, load_predictors(predictors_csv),
                                 static_cast<int>(burn_in),
                                 static_cast<int>(thin),
                                 static_cast<int>(iterations));
      imp->p = static_cast<int>(ds->ds.p());
    } catch (...) {
      delete imp;
      throw;
    }
    *out = imp;
    return MIC_OK;
  });
}

int mic_imputation_count(const mic_imputation* imp) {
  return imp == nullptr ? 0 : static_cast<int>(imp->res.completed.size());
}

int mic_imputation_copy(const mic_imputation* imp, int index,
                        mic_dataset** out) {
  return guarded([&] {
    require(imp != nullptr && out != nullptr, "imp and out must not be NULL");
    require(index >= 0 &&
                index < static_cast<int>(imp->res.completed.size()),
            "copy index out of range");
    *out = new mic_dataset{miclust::make_dataset(imp->res.completed[index])};
    return MIC_OK;
  });
}

int mic_imputation_save_diagnostics(const mic_imputation* imp,
                                    const char* path) {
  return guarded([&] {
    require(imp != nullptr && path != nullptr,
            "imp and path must not be NULL");
    miclust::save_diagnostics_csv(imp->res, path);
    return MIC_OK;
  });
}

void mic_imputation_free(mic_imputation* imp) { delete imp; }

int mic_cluster(const mic_dataset* ds, const char* method, int k,
                const char* cov_model, int standardize,
                unsigned long long seed, mic_partition** out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "ds and out must not be NULL");
    require(ds->ds.complete(), "dataset has missing cells; impute first");
    const miclust::ClustererSpec spec =
        build_clusterer(method, k, cov_model, standardize);
    miclust::Rng rng(seed);
    *out = new mic_partition{miclust::run_clusterer(ds->ds.values, spec, rng)};
    return MIC_OK;
  });
}

int mic_partition_size(const mic_partition* part) {
  return part == nullptr ? 0 : static_cast<int>(part->part.labels.size());
}

int mic_partition_k(const mic_partition* part) {
  return part == nullptr ? 0 : part->part.k;
}

int mic_partition_labels(const mic_partition* part, int* out) {
  return guarded([&] {
    require(part != nullptr && out != nullptr,
            "part and out must not be NULL");
    for (std::size_t i = 0; i < part->part.labels.size(); ++i)
      out[i] = part->part.labels[i];
    return MIC_OK;
  });
}

int mic_partition_save(const mic_partition* part, const char* path) {
  return guarded([&] {
    require(part != nullptr && path != nullptr,
            "part and path must not be NULL");
    std::ofstream outf(path);
    if (!outf)
      throw miclust::IoError("cannot open '" + std::string(path) +
                             "' for writing");
    outf << "label\n";
    for (const int lab : part->part.labels) outf << lab << '\n';
    if (!outf)
      throw miclust::IoError("write failed for '" + std::string(path) + "'");
    return MIC_OK;
  });
}

int mic_partition_load(const char* path, mic_partition** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr,
            "path and out must not be NULL");
    std::ifstream in(path);
    if (!in)
      throw miclust::IoError("cannot open '" + std::string(path) + "'");
    std::string line;
    int file_line = 0;
    miclust::Partition part;
    int max_label = -1;
    while (std::getline(in, line)) {
      ++file_line;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (file_line == 1) continue;  // header
      if (line.empty()) continue;
      std::size_t used = 0;
      int value = 0;
      try {
        value = std::stoi(line, &used);
      } catch (const std::exception&) {
        throw miclust::ParseError("labels '" + std::string(path) + "' line " +
                                  std::to_string(file_line) +
                                  ": not an integer");
      }
      if (used != line.size() || value < 0)
        throw miclust::ParseError("labels '" + std::string(path) + "' line " +
                                  std::to_string(file_line) +
                                  ": not a cluster index");
      part.labels.push_back(value);
      max_label = std::max(max_label, value);
    }
    if (part.labels.empty())
      throw miclust::ParseError("labels '" + std::string(path) +
                                "': no rows");
    part.k = max_label + 1;
    miclust::validate_partition(part, "mic_partition_load");
    *out = new mic_partition{std::move(part)};
    return MIC_OK;
  });
}

void mic_partition_free(mic_partition* part) { delete part; }

int mic_ari(const mic_partition* a, const mic_partition* b, double* out) {
  return guarded([&] {
    require(a != nullptr && b != nullptr && out != nullptr,
            "a, b and out must not be NULL");
    *out = miclust::ari(a->part, b->part);
    return MIC_OK;
  });
}

int mic_pool(const mic_partition* const* parts, int m, int k,
             unsigned long long seed, mic_partition** out) {
  return guarded([&] {
    require(parts != nullptr && out != nullptr,
            "parts and out must not be NULL");
    require(m >= 1, "m must be at least 1");
    std::vector<miclust::Partition> inputs;
    inputs.reserve(m);
    for (int i = 0; i < m; ++i) {
      require(parts[i] != nullptr, "parts contains a NULL handle");
      inputs.push_back(parts[i]->part);
    }
    if (m == 1) {
      *out = new mic_partition{std::move(inputs[0])};
      return MIC_OK;
    }
    miclust::Rng rng(seed);
    *out = new mic_partition{miclust::consensus(inputs, k, rng).partition};
    return MIC_OK;
  });
}

int mic_instability(const mic_dataset* ds, const char* method, int k,
                    const char* cov_model, int standardize, int b,
                    unsigned long long seed, double* out) {
  return guarded([&] {
    require(ds != nullptr && out != nullptr, "ds and out must not be NULL");
    require(ds->ds.complete(), "dataset has missing cells; impute first");
    const miclust::ClustererSpec spec =
        build_clusterer(method, k, cov_model, standardize);
    miclust::Rng rng(seed);
    *out = miclust::instability_single(ds->ds.values, spec, b, rng);
    return MIC_OK;
  });
}

int mic_total_instability(const mic_partition* const* parts, int m,
                          const double* within, double* out) {
  return guarded([&] {
    require(parts != nullptr && out != nullptr,
            "parts and out must not be NULL");
    require(m >= 1, "m must be at least 1");
    std::vector<miclust::Partition> inputs;
    std::vector<double> within_vec(m, 0.0);
    inputs.reserve(m);
    for (int i = 0; i < m; ++i) {
      require(parts[i] != nullptr, "parts contains a NULL handle");
      inputs.push_back(parts[i]->part);
      if (within != nullptr) within_vec[i] = within[i];
    }
    *out = miclust::total_instability(inputs, within_vec);
    return MIC_OK;
  });
}

int mic_choose_k(const mic_dataset* ds, const char* engine,
                 const char* method, int k_max, int m, int b,
                 const char* predictors_csv, unsigned long long seed,
                 const char* table_csv, int* best_k) {
  return guarded([&] {
    require(ds != nullptr && engine != nullptr && method != nullptr,
            "ds, engine and method must not be NULL");
    miclust::Rng rng(seed);
    const miclust::ChooseKResult res = miclust::choose_k(
        ds->ds, miclust::parse_engine(engine),
        miclust::parse_cluster_method(method), k_max, m, b, rng,
        load_predictors(predictors_csv));
    if (table_csv != nullptr && table_csv[0] != '\0') {
      std::ofstream outf(table_csv);
      if (!outf)
        throw miclust::IoError("cannot open '" + std::string(table_csv) +
                               "' for writing");
      outf << "k,total_instability\n";
      for (std::size_t i = 0; i < res.ks.size(); ++i) {
        std::ostringstream valstr;
        valstr.precision(17);
        valstr << res.totals[i];
        outf << res.ks[i] << ',' << valstr.str() << '\n';
      }
      if (!outf)
        throw miclust::IoError("write failed for '" + std::string(table_csv) +
                               "'");
    }
    if (best_k != nullptr) *best_k = res.best_k;
    return MIC_OK;
  });
}

int mic_experiment_run(const char* config_path, int threads) {
  return guarded([&] {
    require(config_path != nullptr, "config_path must not be NULL");
    miclust::ExperimentConfig cfg =
        miclust::parse_experiment_config(config_path);
    if (threads > 0) cfg.spec.threads = threads;
    const miclust::ExperimentResult res = miclust::run_experiment(cfg.spec);
    miclust::save_results_csv(res.rows, cfg.results_csv);
    miclust::save_summary_csv(cfg.spec, res, cfg.summary_csv);
    return MIC_OK;
  });
}

}  // extern "C"
