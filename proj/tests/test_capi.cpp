#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "miclust.h"

namespace {

// Two well separated groups with a few NaN holes, row-major.
std::vector<double> blob_values(int n, int* holes, int n_holes) {
  std::vector<double> v(static_cast<std::size_t>(n) * 2);
  unsigned state = 12345;
  const auto next = [&state]() {
    state = state * 1664525u + 1013904223u;
    return static_cast<double>(state >> 8) / 16777216.0 - 0.5;
  };
  for (int i = 0; i < n; ++i) {
    const double base = i < n / 2 ? 0.0 : 9.0;
    v[2 * i] = base + next();
    v[2 * i + 1] = base + next();
  }
  for (int h = 0; h < n_holes; ++h) v[holes[h]] = std::nan("");
  return v;
}

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::string(mic_version()) == "1.0.0");
  CHECK(std::string(mic_last_error()).empty());
}

TEST_CASE("datasets wrap arrays and report cells") {
  int holes[] = {3, 10};
  const std::vector<double> v = blob_values(20, holes, 2);
  mic_dataset* ds = nullptr;
  REQUIRE(mic_dataset_create(20, 2, v.data(), &ds) == MIC_OK);
  CHECK(mic_dataset_rows(ds) == 20);
  CHECK(mic_dataset_cols(ds) == 2);
  CHECK(mic_dataset_observed(ds, 1, 1) == 0);  // flat index 3
  CHECK(mic_dataset_observed(ds, 5, 0) == 0);  // flat index 10
  CHECK(mic_dataset_observed(ds, 0, 0) == 1);
  CHECK(mic_dataset_value(ds, 0, 0) == v[0]);
  CHECK(std::isnan(mic_dataset_value(ds, 1, 1)));
  CHECK(std::isnan(mic_dataset_value(ds, 99, 0)));
  CHECK(mic_dataset_observed(ds, -1, 0) == 0);
  CHECK(mic_dataset_has_labels(ds) == 0);
  mic_dataset_free(ds);

  CHECK(mic_dataset_create(0, 2, v.data(), &ds) == MIC_ERR_INVALID);
  CHECK(std::string(mic_last_error()).find("positive") != std::string::npos);
}

TEST_CASE("simulation and amputation round trip") {
  mic_dataset* full = nullptr;
  REQUIRE(mic_dataset_simulate("I", 7, &full) == MIC_OK);
  CHECK(mic_dataset_rows(full) == 750);
  CHECK(mic_dataset_cols(full) == 8);
  REQUIRE(mic_dataset_has_labels(full) == 1);
  mic_partition* truth = nullptr;
  REQUIRE(mic_dataset_labels(full, &truth) == MIC_OK);
  CHECK(mic_partition_size(truth) == 750);
  CHECK(mic_partition_k(truth) == 3);
  mic_partition_free(truth);

  mic_dataset* masked = nullptr;
  REQUIRE(mic_dataset_ampute(full, "mcar", 0.25, 0, 11, &masked) == MIC_OK);
  long long missing = 0;
  long long changed = 0;
  for (long long i = 0; i < 750; ++i)
    for (long long j = 0; j < 8; ++j) {
      if (!mic_dataset_observed(masked, i, j)) {
        ++missing;
      } else if (mic_dataset_value(masked, i, j) !=
                 mic_dataset_value(full, i, j)) {
        ++changed;
      }
    }
  CHECK(changed == 0);
  const double frac = static_cast<double>(missing) / 6000.0;
  CHECK(frac > 0.23);
  CHECK(frac < 0.27);

  mic_dataset* bad = nullptr;
  CHECK(mic_dataset_ampute(full, "mnar", 0.25, 0, 11, &bad) ==
        MIC_ERR_INVALID);
  CHECK(std::string(mic_last_error()).find("mnar") != std::string::npos);
  CHECK(mic_dataset_ampute(full, "mar", 0.25, 0, 11, &bad) ==
        MIC_ERR_INVALID);

  mic_dataset_free(masked);
  mic_dataset_free(full);
}

TEST_CASE("imputation preserves observed cells through the C surface") {
  int holes[] = {3, 10, 25, 48, 77};
  const std::vector<double> v = blob_values(60, holes, 5);
  mic_dataset* ds = nullptr;
  REQUIRE(mic_dataset_create(60, 2, v.data(), &ds) == MIC_OK);

  mic_imputation* imp = nullptr;
  REQUIRE(mic_impute(ds, "fcs_norm", 1, 2, -1, -1, 5, nullptr, 3, &imp) ==
          MIC_OK);
  CHECK(mic_imputation_count(imp) == 2);
  for (int c = 0; c < 2; ++c) {
    mic_dataset* copy = nullptr;
    REQUIRE(mic_imputation_copy(imp, c, &copy) == MIC_OK);
    for (long long i = 0; i < 60; ++i)
      for (long long j = 0; j < 2; ++j) {
        CHECK(mic_dataset_observed(copy, i, j) == 1);
        if (mic_dataset_observed(ds, i, j))
          CHECK(mic_dataset_value(copy, i, j) == mic_dataset_value(ds, i, j));
      }
    mic_dataset_free(copy);
  }
  CHECK(mic_imputation_save_diagnostics(imp, "./capi_diag.csv") == MIC_OK);
  std::ifstream diag("./capi_diag.csv");
  std::string header;
  std::getline(diag, header);
  CHECK(header.find("cov_trace") != std::string::npos);
  std::remove("./capi_diag.csv");

  mic_dataset* nocopy = nullptr;
  CHECK(mic_imputation_copy(imp, 5, &nocopy) == MIC_ERR_INVALID);
  mic_imputation_free(imp);

  mic_imputation* bad = nullptr;
  CHECK(mic_impute(ds, "jm_dp", 1, 2, -1, -1, -1, nullptr, 3, &bad) ==
        MIC_ERR_INVALID);
  mic_dataset_free(ds);
}

TEST_CASE("clustering, partitions and pooling work end to end") {
  const std::vector<double> v = blob_values(40, nullptr, 0);
  mic_dataset* ds = nullptr;
  REQUIRE(mic_dataset_create(40, 2, v.data(), &ds) == MIC_OK);

  mic_partition* part = nullptr;
  REQUIRE(mic_cluster(ds, "kmeans", 2, nullptr, -1, 5, &part) == MIC_OK);
  CHECK(mic_partition_size(part) == 40);
  CHECK(mic_partition_k(part) == 2);
  std::vector<int> labels(40);
  REQUIRE(mic_partition_labels(part, labels.data()) == MIC_OK);
  for (int i = 1; i < 20; ++i) CHECK(labels[i] == labels[0]);
  for (int i = 21; i < 40; ++i) CHECK(labels[i] == labels[20]);
  CHECK(labels[0] != labels[20]);

  double self = 0.0;
  REQUIRE(mic_ari(part, part, &self) == MIC_OK);
  CHECK(self == doctest::Approx(1.0));

  REQUIRE(mic_partition_save(part, "./capi_labels.csv") == MIC_OK);
  mic_partition* loaded = nullptr;
  REQUIRE(mic_partition_load("./capi_labels.csv", &loaded) == MIC_OK);
  std::vector<int> loaded_labels(40);
  REQUIRE(mic_partition_labels(loaded, loaded_labels.data()) == MIC_OK);
  CHECK(loaded_labels == labels);
  std::remove("./capi_labels.csv");

  const mic_partition* parts[3] = {part, loaded, part};
  mic_partition* pooled = nullptr;
  REQUIRE(mic_pool(parts, 3, 2, 9, &pooled) == MIC_OK);
  double agree = 0.0;
  REQUIRE(mic_ari(pooled, part, &agree) == MIC_OK);
  CHECK(agree == doctest::Approx(1.0));

  const double within[3] = {0.1, 0.3, 0.2};
  double total = 0.0;
  REQUIRE(mic_total_instability(parts, 3, within, &total) == MIC_OK);
  CHECK(total == doctest::Approx(0.2));
  REQUIRE(mic_total_instability(parts, 3, nullptr, &total) == MIC_OK);
  CHECK(total == doctest::Approx(0.0));

  double stab = 0.0;
  REQUIRE(mic_instability(ds, "kmeans", 2, nullptr, -1, 4, 17, &stab) ==
          MIC_OK);
  CHECK(stab >= 0.0);
  CHECK(stab < 0.05);  // clean separation: bootstrap pairs agree

  mic_partition_free(pooled);
  mic_partition_free(loaded);
  mic_partition_free(part);

  // Incomplete data is rejected before any clustering starts.
  int holes[] = {4};
  const std::vector<double> hv = blob_values(40, holes, 1);
  mic_dataset* holed = nullptr;
  REQUIRE(mic_dataset_create(40, 2, hv.data(), &holed) == MIC_OK);
  mic_partition* nope = nullptr;
  CHECK(mic_cluster(holed, "kmeans", 2, nullptr, -1, 5, &nope) ==
        MIC_ERR_INVALID);
  CHECK(std::string(mic_last_error()).find("missing") != std::string::npos);
  mic_dataset_free(holed);
  mic_dataset_free(ds);
}

TEST_CASE("partition files reject junk") {
  mic_partition* part = nullptr;
  CHECK(mic_partition_load("./does_not_exist.csv", &part) == MIC_ERR_IO);
  std::ofstream out("./capi_junk.csv");
  out << "label\nfour\n";
  out.close();
  CHECK(mic_partition_load("./capi_junk.csv", &part) == MIC_ERR_PARSE);
  CHECK(std::string(mic_last_error()).find("line 2") != std::string::npos);
  std::remove("./capi_junk.csv");
}

TEST_CASE("dataset CSV errors map to parse status") {
  std::ofstream out("./capi_bad.csv");
  out << "a,b\n1,2\n3\n";
  out.close();
  mic_dataset* ds = nullptr;
  CHECK(mic_dataset_load("./capi_bad.csv", nullptr, nullptr, &ds) ==
        MIC_ERR_PARSE);
  CHECK(!std::string(mic_last_error()).empty());
  std::remove("./capi_bad.csv");
}

TEST_CASE("choose_k scans candidates over the C surface") {
  int holes[] = {3, 21, 50};
  const std::vector<double> v = blob_values(60, holes, 3);
  mic_dataset* ds = nullptr;
  REQUIRE(mic_dataset_create(60, 2, v.data(), &ds) == MIC_OK);
  int best_k = 0;
  REQUIRE(mic_choose_k(ds, "fcs_norm", "kmeans", 3, 2, 4, nullptr, 21,
                       "./capi_ktable.csv", &best_k) == MIC_OK);
  CHECK(best_k >= 2);
  CHECK(best_k <= 3);

  std::ifstream table("./capi_ktable.csv");
  std::string line;
  std::getline(table, line);
  CHECK(line == "k,total_instability");
  int rows = 0;
  while (std::getline(table, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  std::remove("./capi_ktable.csv");
  mic_dataset_free(ds);
}

TEST_CASE("experiments run from config files") {
  std::ofstream cfg("./capi_exp.cfg");
  cfg << "model_id = VII\n"
      << "tau = 0.2\n"
      << "engine = fcs_norm\n"
      << "m = 2\n"
      << "l = 6\n"
      << "clusterer = kmeans\n"
      << "k = 3\n"
      << "replicates = 1\n"
      << "seed = 4\n"
      << "results_csv = ./capi_results.csv\n"
      << "summary_csv = ./capi_summary.csv\n";
  cfg.close();
  REQUIRE(mic_experiment_run("./capi_exp.cfg", 0) == MIC_OK);
  std::ifstream results("./capi_results.csv");
  std::string header;
  std::getline(results, header);
  CHECK(header.find("ari") != std::string::npos);
  std::string row;
  std::getline(results, row);
  CHECK(row.find("fcs_norm") != std::string::npos);
  std::remove("./capi_results.csv");
  std::remove("./capi_summary.csv");

  std::ofstream bad("./capi_exp_bad.cfg");
  bad << "model_id = VII\nwrong_key = 1\n";
  bad.close();
  CHECK(mic_experiment_run("./capi_exp_bad.cfg", 0) == MIC_ERR_PARSE);
  CHECK(mic_experiment_run("./capi_no_such.cfg", 0) == MIC_ERR_IO);
  std::remove("./capi_exp.cfg");
  std::remove("./capi_exp_bad.cfg");
}
