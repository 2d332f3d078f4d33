// miclust command line tool. Every subcommand is a thin shell over the C
// library interface; all statistics live behind miclust.h.
//
// Exit codes: 0 success, 2 parse/config error, 3 chain failure (single-run
// subcommands only; `experiment` records chain failures in its results
// table instead).

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "miclust.h"

namespace {

int report(int code, bool chain_is_exit_3) {
  if (code == MIC_OK) return 0;
  std::fprintf(stderr, "miclust: %s\n", mic_last_error());
  if (chain_is_exit_3 && code == MIC_ERR_CHAIN_FAILURE) return 3;
  return 2;
}

struct DatasetGuard {
  mic_dataset* ptr = nullptr;
  ~DatasetGuard() { mic_dataset_free(ptr); }
};

struct PartitionGuard {
  mic_partition* ptr = nullptr;
  ~PartitionGuard() { mic_partition_free(ptr); }
};

struct ImputationGuard {
  mic_imputation* ptr = nullptr;
  ~ImputationGuard() { mic_imputation_free(ptr); }
};

// When the user does not name a label column, detach a column called
// "label" if the file has one (simulate writes its reference labels that
// way). An explicit --label-column always wins; give it an empty value to
// force keeping every column.
std::string sniff_label_column(const std::string& path) {
  std::ifstream in(path);
  std::string header;
  if (!std::getline(in, header)) return "";
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::string cell;
  for (std::size_t i = 0; i <= header.size(); ++i) {
    if (i == header.size() || header[i] == ',') {
      if (cell == "label") return "label";
      cell.clear();
    } else {
      cell += header[i];
    }
  }
  return "";
}

// Single numeric column with a header line, as written by `choose-k` style
// tools: used for per-copy instability values fed to `pool`.
bool read_value_column(const std::string& path, std::vector<double>& out,
                       std::string& err) {
  std::ifstream in(path);
  if (!in) {
    err = "cannot open '" + path + "'";
    return false;
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 || line.empty()) continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(line, &used);
      if (used != line.size()) throw std::invalid_argument(line);
      out.push_back(v);
    } catch (const std::exception&) {
      err = "'" + path + "' line " + std::to_string(line_no) +
            ": not a number";
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple imputation for cluster analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mic_version()));

  // simulate ----------------------------------------------------------------
  auto* simulate = app.add_subcommand(
      "simulate", "Draw a model dataset, mask cells, write CSVs");
  std::string sim_model = "I";
  double sim_tau = 0.25;
  std::string sim_mechanism = "mcar";
  int sim_driver = 1;
  unsigned long long sim_seed = 1;
  std::string sim_na = "NA";
  std::string sim_out, sim_full_out;
  simulate->add_option("--model", sim_model, "Model id (I..XI)");
  simulate->add_option("--tau", sim_tau, "Missing fraction in [0, 1)");
  simulate->add_option("--mechanism", sim_mechanism, "mcar or mar");
  simulate->add_option("--driver-col", sim_driver,
                       "1-based driver column for mar");
  simulate->add_option("--seed", sim_seed, "Master seed");
  simulate->add_option("--na-token", sim_na, "Missing-cell token");
  simulate->add_option("--out", sim_out, "Masked CSV path")->required();
  simulate->add_option("--full-out", sim_full_out,
                       "Optional CSV path for the unmasked draw");
  simulate->callback([&]() {
    DatasetGuard full;
    int code = mic_dataset_simulate(sim_model.c_str(), sim_seed, &full.ptr);
    if (code == MIC_OK && !sim_full_out.empty())
      code = mic_dataset_save(full.ptr, sim_full_out.c_str(), sim_na.c_str());
    DatasetGuard masked;
    if (code == MIC_OK) {
      if (sim_tau > 0.0) {
        code = mic_dataset_ampute(full.ptr, sim_mechanism.c_str(), sim_tau,
                                  sim_driver, sim_seed + 1, &masked.ptr);
      } else {
        masked.ptr = full.ptr;
        full.ptr = nullptr;
      }
    }
    if (code == MIC_OK)
      code = mic_dataset_save(masked.ptr, sim_out.c_str(), sim_na.c_str());
    std::exit(report(code, true));
  });

  // impute ------------------------------------------------------------------
  auto* impute = app.add_subcommand(
      "impute", "Complete a CSV with missing cells m times");
  std::string imp_input, imp_engine = "jm_gl", imp_na = "NA";
  std::string imp_label_col, imp_predictors, imp_prefix = "imputed";
  std::string imp_diag;
  int imp_k = 3, imp_m = 20;
  long long imp_burn = -1, imp_thin = -1, imp_iters = -1;
  unsigned long long imp_seed = 1;
  impute->add_option("--input", imp_input, "CSV with missing cells")
      ->required();
  impute->add_option("--engine", imp_engine,
                     "jm_gl, jm_norm, fcs_homo, fcs_hetero or fcs_norm");
  impute->add_option("--k", imp_k, "Mixture classes for the aware engines");
  impute->add_option("--m", imp_m, "Number of completed copies");
  impute->add_option("--burn-in", imp_burn, "Gibbs burn-in (-1 = default)");
  impute->add_option("--thin", imp_thin, "Gibbs thinning (-1 = default)");
  impute->add_option("--iterations", imp_iters,
                     "Chained-equation sweeps (-1 = default)");
  impute->add_option("--predictors", imp_predictors,
                     "0/1 predictor matrix CSV for the fcs engines");
  impute->add_option("--label-column", imp_label_col,
                     "Label column to detach (default: label, when present)");
  impute->add_option("--na-token", imp_na, "Missing-cell token");
  impute->add_option("--seed", imp_seed, "Master seed");
  impute->add_option("--out-prefix", imp_prefix,
                     "Copies land in <prefix>1.csv .. <prefix>m.csv");
  impute->add_option("--diagnostics", imp_diag,
                     "Optional chain statistics CSV");
  impute->callback([&]() {
    if (!impute->count("--label-column"))
      imp_label_col = sniff_label_column(imp_input);
    DatasetGuard ds;
    int code = mic_dataset_load(imp_input.c_str(), imp_na.c_str(),
                                imp_label_col.c_str(), &ds.ptr);
    ImputationGuard imp;
    if (code == MIC_OK)
      code = mic_impute(ds.ptr, imp_engine.c_str(), imp_k, imp_m, imp_burn,
                        imp_thin, imp_iters,
                        imp_predictors.empty() ? nullptr
                                               : imp_predictors.c_str(),
                        imp_seed, &imp.ptr);
    if (code == MIC_OK && !imp_diag.empty())
      code = mic_imputation_save_diagnostics(imp.ptr, imp_diag.c_str());
    for (int c = 0; code == MIC_OK && c < mic_imputation_count(imp.ptr);
         ++c) {
      DatasetGuard copy;
      code = mic_imputation_copy(imp.ptr, c, &copy.ptr);
      if (code == MIC_OK)
        code = mic_dataset_save(
            copy.ptr, (imp_prefix + std::to_string(c + 1) + ".csv").c_str(),
            imp_na.c_str());
    }
    std::exit(report(code, true));
  });

  // cluster -----------------------------------------------------------------
  auto* cluster = app.add_subcommand(
      "cluster", "Partition one complete CSV into k groups");
  std::string clu_input, clu_method = "kmeans", clu_cov, clu_na = "NA";
  std::string clu_label_col, clu_out;
  int clu_k = 3, clu_standardize = -1;
  unsigned long long clu_seed = 1;
  cluster->add_option("--input", clu_input, "Complete CSV")->required();
  cluster->add_option("--method", clu_method,
                      "kmeans, pam, ward or mixture");
  cluster->add_option("--k", clu_k, "Number of clusters");
  cluster->add_option("--cov-model", clu_cov,
                      "shared or per_cluster (mixture only)");
  cluster->add_flag(
      "--standardize,!--no-standardize",
      [&clu_standardize](std::int64_t count) {
        clu_standardize = count > 0 ? 1 : 0;
      },
      "Scale columns first (default: on except for mixture)");
  cluster->add_option("--label-column", clu_label_col,
                      "Label column to detach (default: label, when present)");
  cluster->add_option("--na-token", clu_na, "Missing-cell token");
  cluster->add_option("--seed", clu_seed, "Master seed");
  cluster->add_option("--out", clu_out, "Labels CSV path")->required();
  cluster->callback([&]() {
    if (!cluster->count("--label-column"))
      clu_label_col = sniff_label_column(clu_input);
    DatasetGuard ds;
    int code = mic_dataset_load(clu_input.c_str(), clu_na.c_str(),
                                clu_label_col.c_str(), &ds.ptr);
    PartitionGuard part;
    if (code == MIC_OK)
      code = mic_cluster(ds.ptr, clu_method.c_str(), clu_k,
                         clu_cov.empty() ? nullptr : clu_cov.c_str(),
                         clu_standardize, clu_seed, &part.ptr);
    if (code == MIC_OK)
      code = mic_partition_save(part.ptr, clu_out.c_str());
    std::exit(report(code, true));
  });

  // pool --------------------------------------------------------------------
  auto* pool = app.add_subcommand(
      "pool", "Consensus of m label CSVs; prints total instability");
  std::vector<std::string> pool_inputs;
  std::string pool_out, pool_within;
  int pool_k = 3;
  unsigned long long pool_seed = 1;
  pool->add_option("--labels", pool_inputs, "Label CSVs, one per copy")
      ->required()
      ->expected(-1);
  pool->add_option("--k", pool_k, "Number of clusters");
  pool->add_option("--within", pool_within,
                   "Single-column CSV of per-copy instabilities "
                   "(default: zeros)");
  pool->add_option("--seed", pool_seed, "Master seed");
  pool->add_option("--out", pool_out, "Consensus labels CSV")->required();
  pool->callback([&]() {
    std::vector<mic_partition*> parts;
    int code = MIC_OK;
    for (const std::string& path : pool_inputs) {
      mic_partition* p = nullptr;
      code = mic_partition_load(path.c_str(), &p);
      if (code != MIC_OK) break;
      parts.push_back(p);
    }
    std::vector<double> within;
    if (code == MIC_OK && !pool_within.empty()) {
      std::string err;
      if (!read_value_column(pool_within, within, err)) {
        std::fprintf(stderr, "miclust: %s\n", err.c_str());
        code = MIC_ERR_PARSE;
      } else if (within.size() != parts.size()) {
        std::fprintf(stderr,
                     "miclust: %zu within values for %zu label files\n",
                     within.size(), parts.size());
        code = MIC_ERR_INVALID;
      }
    }
    PartitionGuard pooled;
    double total = 0.0;
    if (code == MIC_OK) {
      const int m = static_cast<int>(parts.size());
      code = mic_pool(parts.data(), m, pool_k, pool_seed, &pooled.ptr);
      if (code == MIC_OK)
        code = mic_total_instability(parts.data(), m,
                                     within.empty() ? nullptr : within.data(),
                                     &total);
    }
    if (code == MIC_OK)
      code = mic_partition_save(pooled.ptr, pool_out.c_str());
    if (code == MIC_OK) std::printf("%.17g\n", total);
    for (mic_partition* p : parts) mic_partition_free(p);
    std::exit(report(code, true));
  });

  // choose-k ----------------------------------------------------------------
  auto* choosek = app.add_subcommand(
      "choose-k", "Scan k=2..k-max by total instability; prints the best k");
  std::string ck_input, ck_engine = "fcs_homo", ck_method = "kmeans";
  std::string ck_predictors, ck_na = "NA", ck_label_col, ck_out;
  int ck_kmax = 6, ck_m = 5, ck_b = 20;
  unsigned long long ck_seed = 1;
  choosek->add_option("--input", ck_input, "CSV with missing cells")
      ->required();
  choosek->add_option("--engine", ck_engine, "Imputation engine");
  choosek->add_option("--method", ck_method, "Clustering method");
  choosek->add_option("--k-max", ck_kmax, "Largest candidate k");
  choosek->add_option("--m", ck_m, "Copies per candidate");
  choosek->add_option("--b", ck_b, "Bootstrap pairs per copy");
  choosek->add_option("--predictors", ck_predictors,
                      "0/1 predictor matrix CSV for the fcs engines");
  choosek->add_option("--label-column", ck_label_col,
                      "Label column to detach (default: label, when present)");
  choosek->add_option("--na-token", ck_na, "Missing-cell token");
  choosek->add_option("--seed", ck_seed, "Master seed");
  choosek->add_option("--out", ck_out, "Instability table CSV");
  choosek->callback([&]() {
    if (!choosek->count("--label-column"))
      ck_label_col = sniff_label_column(ck_input);
    DatasetGuard ds;
    int code = mic_dataset_load(ck_input.c_str(), ck_na.c_str(),
                                ck_label_col.c_str(), &ds.ptr);
    int best_k = 0;
    if (code == MIC_OK)
      code = mic_choose_k(ds.ptr, ck_engine.c_str(), ck_method.c_str(),
                          ck_kmax, ck_m, ck_b,
                          ck_predictors.empty() ? nullptr
                                                : ck_predictors.c_str(),
                          ck_seed, ck_out.empty() ? nullptr : ck_out.c_str(),
                          &best_k);
    if (code == MIC_OK) std::printf("%d\n", best_k);
    std::exit(report(code, true));
  });

  // experiment --------------------------------------------------------------
  auto* experiment = app.add_subcommand(
      "experiment", "Run a config-driven replicate sweep");
  std::string exp_config;
  int exp_threads = 0;
  experiment->add_option("--config", exp_config, "key=value config file")
      ->required();
  experiment->add_option("--threads", exp_threads,
                         "Worker threads (overrides the config)");
  experiment->callback([&]() {
    const int code = mic_experiment_run(exp_config.c_str(), exp_threads);
    std::exit(report(code, false));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return 0;
}
