#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "errors.hpp"
#include "pool.hpp"

namespace miclust {

namespace {

enum : std::uint64_t {
  kStageGenerate = 1,
  kStageAmpute = 2,
  kStageImpute = 3,
  kStageCluster = 4,
  kStageStability = 5,
  kStagePool = 6,
};

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

SimModelSpec build_model_spec(const std::string& model_id) {
  const std::string id = upper(trim(model_id));
  SimModelSpec spec;
  spec.model_id = id;
  spec.delta = 2.0;
  spec.rho = 0.3;
  const auto same_cov = [&](int k, CovKind kind) {
    spec.k = k;
    spec.cov_kinds.assign(static_cast<std::size_t>(k), kind);
  };
  if (id == "I") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {250, 250, 250};
  } else if (id == "II") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {250, 250, 250};
    spec.delta = 1.5;
  } else if (id == "III") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {250, 250, 250};
    spec.delta = 2.5;
  } else if (id == "IV") {
    same_cov(2, CovKind::sigma_rho);
    spec.sizes = {250, 250};
  } else if (id == "V") {
    same_cov(4, CovKind::sigma_rho);
    spec.sizes = {250, 250, 250, 250};
  } else if (id == "VI") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {400, 400, 400};
  } else if (id == "VII") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {100, 100, 100};
  } else if (id == "VIII") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {250, 250, 100};
  } else if (id == "IX") {
    same_cov(3, CovKind::sigma_rho);
    spec.sizes = {400, 250, 250};
  } else if (id == "X") {
    spec.k = 3;
    spec.sizes = {250, 250, 250};
    spec.cov_kinds = {CovKind::identity8, CovKind::sigma_rho,
                      CovKind::sigma_neg_rho};
  } else if (id == "XI") {
    spec.k = 3;
    spec.sizes = {250, 250, 250};
    spec.delta = 1.5;
    spec.cov_kinds = {CovKind::identity8, CovKind::sigma_rho,
                      CovKind::sigma_neg_rho};
  } else {
    throw InvalidArgument("build_model_spec: unknown model id '" + model_id +
                          "' (expected a roman numeral I..XI)");
  }
  return spec;
}

Eigen::VectorXd model_mean(int component, double delta) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(8);
  const double d = delta;
  switch (component) {
    case 0:
      mu[4] = d;
      mu[5] = d;
      mu[7] = d * d;
      break;
    case 1:
      mu[4] = -d;
      mu[5] = -d;
      mu[6] = -d;
      break;
    case 2:
      mu[4] = -d;
      mu[5] = d;
      mu[6] = d;
      mu[7] = -d * d;
      break;
    case 3:
      return -model_mean(2, d);
    default:
      throw InvalidArgument("model_mean: component outside 0..3");
  }
  return mu;
}

Eigen::MatrixXd model_covariance(CovKind kind, double rho) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(8, 8);
  if (kind == CovKind::identity8) return cov;
  const double r = kind == CovKind::sigma_rho ? rho : -rho;
  for (int i = 4; i < 8; ++i)
    for (int j = 4; j < 8; ++j)
      if (i != j) cov(i, j) = r;
  return cov;
}

Dataset generate_model(const SimModelSpec& spec, Rng& rng) {
  if (spec.k < 1 || spec.sizes.size() != static_cast<std::size_t>(spec.k) ||
      spec.cov_kinds.size() != static_cast<std::size_t>(spec.k))
    throw InvalidArgument("generate_model: sizes/cov_kinds must match k");
  int n = 0;
  for (int s : spec.sizes) {
    if (s <= 0) throw InvalidArgument("generate_model: cluster sizes must be positive");
    n += s;
  }
  Eigen::MatrixXd values(n, 8);
  std::vector<int> labels(static_cast<std::size_t>(n));
  int row = 0;
  for (int w = 0; w < spec.k; ++w) {
    const Eigen::VectorXd mu = model_mean(w, spec.delta);
    const Eigen::MatrixXd cov = model_covariance(spec.cov_kinds[w], spec.rho);
    for (int i = 0; i < spec.sizes[w]; ++i, ++row) {
      values.row(row) = draw_mvnormal(mu, cov, rng).transpose();
      labels[static_cast<std::size_t>(row)] = w;
    }
  }
  Dataset ds = make_dataset(values);
  ds.ref_labels = Partition{labels, spec.k};
  return ds;
}

double quantile_interpolated(const std::vector<double>& sorted_values,
                             double prob) {
  if (sorted_values.empty())
    throw InvalidArgument("quantile_interpolated: empty vector");
  if (!(prob >= 0.0 && prob <= 1.0))
    throw InvalidArgument("quantile_interpolated: prob outside [0, 1]");
  const std::size_t n = sorted_values.size();
  if (n == 1) return sorted_values[0];
  const double h = static_cast<double>(n - 1) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("summarize: empty vector");
  std::sort(values.begin(), values.end());
  Summary s;
  s.count = static_cast<int>(values.size());
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2]
                        : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  s.iqr = quantile_interpolated(values, 0.75) -
          quantile_interpolated(values, 0.25);
  return s;
}

namespace {

std::vector<Eigen::MatrixXd> load_external_copies(const std::string& dir,
                                                  const Dataset& ds,
                                                  const std::string& na_token) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".csv") paths.push_back(entry.path().string());
  }
  if (ec)
    throw IoError("external engine: cannot list directory '" + dir + "'");
  if (paths.empty())
    throw InvalidArgument("external engine: no .csv files in '" + dir + "'");
  std::sort(paths.begin(), paths.end());
  std::vector<Eigen::MatrixXd> copies;
  for (const std::string& path : paths) {
    Dataset copy = load_csv(path, na_token);
    if (copy.n() != ds.n() || copy.p() != ds.p())
      throw InvalidArgument("external engine: '" + path + "' is " +
                            std::to_string(copy.n()) + "x" +
                            std::to_string(copy.p()) + ", expected " +
                            std::to_string(ds.n()) + "x" +
                            std::to_string(ds.p()));
    if (!copy.complete())
      throw InvalidArgument("external engine: '" + path +
                            "' still contains missing cells");
    copies.push_back(copy.values);
  }
  return copies;
}

ReplicateRow run_one_replicate(const ExperimentSpec& spec, const Rng& master,
                               const Dataset* shared_input, int r) {
  ReplicateRow row;
  row.replicate = r;
  row.mechanism = spec.mechanism.kind == Mechanism::mar ? "mar" : "mcar";
  row.tau = spec.mechanism.tau;
  row.clusterer = cluster_method_name(spec.clusterer.method);
  row.k = spec.clusterer.k;

  Dataset base;
  if (shared_input != nullptr) {
    base = *shared_input;
  } else {
    Rng gen_rng = master.child(kStageGenerate, static_cast<std::uint64_t>(r));
    base = generate_model(spec.model, gen_rng);
  }

  Dataset working = base;
  if (spec.mechanism.tau > 0.0) {
    Rng amp_rng = master.child(kStageAmpute, static_cast<std::uint64_t>(r));
    working = ampute(base, spec.mechanism, amp_rng);
  }

  try {
    std::vector<Eigen::MatrixXd> copies;
    if (working.complete()) {
      row.engine = "full";
      copies.push_back(working.values);
    } else if (spec.external) {
      row.engine = "external";
      copies = load_external_copies(spec.external_dir, working, spec.na_token);
    } else {
      row.engine = engine_name(spec.engine);
      Rng imp_rng = master.child(kStageImpute, static_cast<std::uint64_t>(r));
      ImputationResult imp =
          impute(working, spec.engine, spec.clusterer.k, spec.m, imp_rng,
                 spec.predictors, spec.burn_in, spec.thin, spec.fcs_iterations);
      copies = std::move(imp.completed);
    }

    const int m = static_cast<int>(copies.size());
    std::vector<Partition> parts;
    parts.reserve(static_cast<std::size_t>(m));
    std::vector<double> within;
    for (int c = 0; c < m; ++c) {
      Rng cl_rng = master.child(kStageCluster, static_cast<std::uint64_t>(r),
                                static_cast<std::uint64_t>(c));
      parts.push_back(run_clusterer(copies[static_cast<std::size_t>(c)],
                                    spec.clusterer, cl_rng));
      if (spec.stability_rounds > 0) {
        Rng st_rng = master.child(kStageStability, static_cast<std::uint64_t>(r),
                                  static_cast<std::uint64_t>(c));
        within.push_back(instability_single(copies[static_cast<std::size_t>(c)],
                                            spec.clusterer,
                                            spec.stability_rounds, st_rng));
      }
    }

    Partition pooled;
    if (m == 1) {
      pooled = parts[0];
    } else {
      Rng pool_rng = master.child(kStagePool, static_cast<std::uint64_t>(r));
      pooled = consensus(parts, spec.clusterer.k, pool_rng).partition;
    }

    if (spec.stability_rounds > 0)
      row.total_instability = total_instability(parts, within);
    if (base.ref_labels.has_value())
      row.ari = ari(pooled, *base.ref_labels);
  } catch (const ChainFailure& e) {
    row.status = std::string("chain_failure: ") + e.what();
  } catch (const DegenerateFit& e) {
    row.status = std::string("degenerate_fit: ") + e.what();
  } catch (const NumericError& e) {
    row.status = std::string("numeric_error: ") + e.what();
  }
  return row;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  if (spec.replicates < 1)
    throw InvalidArgument("run_experiment: replicates must be >= 1");
  if (spec.m < 1) throw InvalidArgument("run_experiment: m must be >= 1");
  if (spec.external && spec.replicates != 1)
    throw InvalidArgument(
        "run_experiment: the external engine replays fixed completed files, "
        "so replicates must be 1");

  Dataset input_holder;
  const Dataset* shared_input = nullptr;
  if (!spec.input_csv.empty()) {
    input_holder = load_csv(spec.input_csv, spec.na_token, spec.label_column);
    if (!input_holder.complete() && spec.mechanism.tau > 0.0)
      throw InvalidArgument(
          "run_experiment: input dataset already has missing cells; "
          "set tau = 0 to impute it as-is");
    shared_input = &input_holder;
  }

  const Rng master(spec.master_seed);
  std::vector<ReplicateRow> rows(static_cast<std::size_t>(spec.replicates));
  const int threads = std::max(1, spec.threads);
  if (threads == 1 || spec.replicates == 1) {
    for (int r = 0; r < spec.replicates; ++r)
      rows[static_cast<std::size_t>(r)] =
          run_one_replicate(spec, master, shared_input, r);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto worker = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= spec.replicates) return;
        try {
          rows[static_cast<std::size_t>(r)] =
              run_one_replicate(spec, master, shared_input, r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min(threads, spec.replicates);
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ExperimentResult res;
  res.rows = std::move(rows);
  std::vector<double> oks;
  for (const ReplicateRow& row : res.rows)
    if (row.status == "ok" && !std::isnan(row.ari)) oks.push_back(row.ari);
  if (!oks.empty()) res.ari_summary = summarize(std::move(oks));
  return res;
}

void save_results_csv(const std::vector<ReplicateRow>& rows,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_results_csv: cannot open '" + path + "'");
  out << "replicate,engine,mechanism,tau,clusterer,k,ari,total_instability,"
         "status\n";
  for (const ReplicateRow& r : rows) {
    out << r.replicate << ',' << csv_safe(r.engine) << ','
        << csv_safe(r.mechanism) << ',' << format_double(r.tau) << ','
        << csv_safe(r.clusterer) << ',' << r.k << ',' << format_double(r.ari)
        << ',' << format_double(r.total_instability) << ','
        << csv_safe(r.status) << '\n';
  }
  if (!out) throw IoError("save_results_csv: write failed for '" + path + "'");
}

void save_summary_csv(const ExperimentSpec& spec, const ExperimentResult& res,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_summary_csv: cannot open '" + path + "'");
  const std::string engine =
      spec.mechanism.tau == 0.0 && spec.input_csv.empty()
          ? "full"
          : (spec.external ? "external" : engine_name(spec.engine));
  out << "engine,mechanism,tau,clusterer,k,m,replicates,replicates_ok,"
         "median_ari,iqr_ari\n";
  out << csv_safe(engine) << ','
      << (spec.mechanism.kind == Mechanism::mar ? "mar" : "mcar") << ','
      << format_double(spec.mechanism.tau) << ','
      << cluster_method_name(spec.clusterer.method) << ',' << spec.clusterer.k
      << ',' << spec.m << ',' << spec.replicates << ',' << res.ari_summary.count
      << ',' << format_double(res.ari_summary.median) << ','
      << format_double(res.ari_summary.iqr) << '\n';
  if (!out) throw IoError("save_summary_csv: write failed for '" + path + "'");
}

namespace {

int parse_int(const std::string& value, int line_no, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config line " + std::to_string(line_no) + ": key '" +
                     key + "' needs an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& value, int line_no,
                    const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config line " + std::to_string(line_no) + ": key '" +
                     key + "' needs a number, got '" + value + "'");
  }
}

std::uint64_t parse_seed(const std::string& value, int line_no,
                         const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ParseError("config line " + std::to_string(line_no) + ": key '" +
                     key + "' needs a nonnegative integer, got '" + value +
                     "'");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  ExperimentConfig cfg;
  ExperimentSpec& spec = cfg.spec;
  bool have_model = false;
  bool standardize_set = false;
  bool standardize_value = true;
  bool cov_model_set = false;
  std::string predictors_csv;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected key=value, got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParseError("config line " + std::to_string(line_no) +
                       ": empty key or value");

    if (key == "model_id") {
      spec.model = build_model_spec(value);
      have_model = true;
    } else if (key == "input_csv") {
      spec.input_csv = value;
    } else if (key == "label_column") {
      spec.label_column = value;
    } else if (key == "na_token") {
      spec.na_token = value;
    } else if (key == "tau") {
      spec.mechanism.tau = parse_double(value, line_no, key);
      if (spec.mechanism.tau < 0.0 || spec.mechanism.tau >= 1.0)
        throw ParseError("config line " + std::to_string(line_no) +
                         ": tau must lie in [0, 1)");
    } else if (key == "mechanism") {
      if (value == "mcar")
        spec.mechanism.kind = Mechanism::mcar;
      else if (value == "mar")
        spec.mechanism.kind = Mechanism::mar;
      else
        throw ParseError("config line " + std::to_string(line_no) +
                         ": mechanism must be mcar or mar");
    } else if (key == "driver_col") {
      const int col = parse_int(value, line_no, key);
      if (col < 1)
        throw ParseError("config line " + std::to_string(line_no) +
                         ": driver_col is 1-based and must be >= 1");
      spec.mechanism.driver_col = col - 1;
    } else if (key == "engine") {
      if (value == "external") {
        spec.external = true;
      } else {
        spec.external = false;
        spec.engine = parse_engine(value);
      }
    } else if (key == "external_dir") {
      spec.external_dir = value;
    } else if (key == "clusterer") {
      spec.clusterer.method = parse_cluster_method(value);
    } else if (key == "cov_model") {
      if (value == "shared")
        spec.clusterer.cov_model = CovModel::shared;
      else if (value == "per_cluster")
        spec.clusterer.cov_model = CovModel::per_cluster;
      else
        throw ParseError("config line " + std::to_string(line_no) +
                         ": cov_model must be shared or per_cluster");
      cov_model_set = true;
    } else if (key == "k") {
      spec.clusterer.k = parse_int(value, line_no, key);
    } else if (key == "m") {
      spec.m = parse_int(value, line_no, key);
    } else if (key == "l") {
      spec.fcs_iterations = parse_int(value, line_no, key);
    } else if (key == "burn_in") {
      spec.burn_in = parse_int(value, line_no, key);
    } else if (key == "thin") {
      spec.thin = parse_int(value, line_no, key);
    } else if (key == "predictors_csv") {
      predictors_csv = value;
    } else if (key == "standardize") {
      const int v = parse_int(value, line_no, key);
      if (v != 0 && v != 1)
        throw ParseError("config line " + std::to_string(line_no) +
                         ": standardize must be 0 or 1");
      standardize_set = true;
      standardize_value = v == 1;
    } else if (key == "replicates") {
      spec.replicates = parse_int(value, line_no, key);
    } else if (key == "stability_rounds") {
      spec.stability_rounds = parse_int(value, line_no, key);
    } else if (key == "seed") {
      spec.master_seed = parse_seed(value, line_no, key);
    } else if (key == "threads") {
      spec.threads = parse_int(value, line_no, key);
    } else if (key == "results_csv") {
      cfg.results_csv = value;
    } else if (key == "summary_csv") {
      cfg.summary_csv = value;
    } else {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": unknown key '" + key + "'");
    }
  }

  if (!have_model && spec.input_csv.empty())
    throw ParseError("config: either model_id or input_csv is required");
  if (spec.external && spec.external_dir.empty())
    throw ParseError("config: engine=external requires external_dir");

  // Rebuild the clusterer spec so method-dependent defaults apply, then put
  // explicit overrides back on top.
  const ClusterMethod method = spec.clusterer.method;
  const int k = spec.clusterer.k;
  const CovModel cov = spec.clusterer.cov_model;
  spec.clusterer = make_clusterer_spec(method, k);
  if (cov_model_set) spec.clusterer.cov_model = cov;
  if (standardize_set) spec.clusterer.standardize = standardize_value;

  if (!predictors_csv.empty()) spec.predictors = load_predictor_csv(predictors_csv);
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config_text(buffer.str());
}

}  // namespace miclust
