#include "pool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gmm.hpp"

namespace miclust {

namespace {

enum : std::uint64_t {
  kStageRound = 1,
  kStageScanImpute = 2,
  kStageScanCluster = 3,
  kStageScanStability = 4,
};

void check_same_n(const Partition& a, const Partition& b, const char* who) {
  if (a.n() != b.n())
    throw InvalidArgument(std::string(who) +
                          ": partitions cover different row counts");
}

double comb2(double x) { return 0.5 * x * (x - 1.0); }

// Contingency table of two partitions plus its margins.
struct PairCounts {
  Eigen::MatrixXd table;
  Eigen::VectorXd rows, cols;
  double n = 0.0;
};

PairCounts pair_counts(const Partition& a, const Partition& b) {
  PairCounts pc;
  pc.table = Eigen::MatrixXd::Zero(a.k, b.k);
  for (int i = 0; i < a.n(); ++i)
    pc.table(a.labels[i], b.labels[i]) += 1.0;
  pc.rows = pc.table.rowwise().sum();
  pc.cols = pc.table.colwise().sum();
  pc.n = static_cast<double>(a.n());
  return pc;
}

}  // namespace

Eigen::MatrixXd connectivity(const Partition& part) {
  validate_partition(part, "connectivity");
  const int n = part.n();
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      c(i, j) = part.labels[i] == part.labels[j] ? 1.0 : 0.0;
  return c;
}

Eigen::MatrixXd mean_connectivity(const std::vector<Partition>& parts) {
  if (parts.empty())
    throw InvalidArgument("mean_connectivity: no partitions given");
  const int n = parts[0].n();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (const Partition& p : parts) {
    check_same_n(parts[0], p, "mean_connectivity");
    validate_partition(p, "mean_connectivity");
    for (int i = 0; i < n; ++i) {
      const int li = p.labels[i];
      for (int j = 0; j < n; ++j)
        if (p.labels[j] == li) m(i, j) += 1.0;
    }
  }
  return m / static_cast<double>(parts.size());
}

double mirkin(const Partition& a, const Partition& b) {
  check_same_n(a, b, "mirkin");
  validate_partition(a, "mirkin");
  validate_partition(b, "mirkin");
  const PairCounts pc = pair_counts(a, b);
  const double same_a = pc.rows.squaredNorm();
  const double same_b = pc.cols.squaredNorm();
  const double both = pc.table.squaredNorm();
  return same_a + same_b - 2.0 * both;
}

double ari(const Partition& a, const Partition& b) {
  check_same_n(a, b, "ari");
  validate_partition(a, "ari");
  validate_partition(b, "ari");
  const PairCounts pc = pair_counts(a, b);
  double index = 0.0;
  for (int i = 0; i < a.k; ++i)
    for (int j = 0; j < b.k; ++j) index += comb2(pc.table(i, j));
  double sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < a.k; ++i) sum_a += comb2(pc.rows[i]);
  for (int j = 0; j < b.k; ++j) sum_b += comb2(pc.cols[j]);
  const double total = comb2(pc.n);
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double maximum = 0.5 * (sum_a + sum_b);
  const double denom = maximum - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double consensus_objective(const Eigen::MatrixXd& mean_conn,
                           const Partition& part) {
  const int n = part.n();
  if (mean_conn.rows() != n || mean_conn.cols() != n)
    throw InvalidArgument("consensus_objective: size mismatch");
  double obj = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double h = part.labels[i] == part.labels[j] ? 1.0 : 0.0;
      const double d = mean_conn(i, j) - h;
      obj += d * d;
    }
  return obj;
}

namespace {

// Greedy polish of the consensus objective. First makes every cluster index
// occupied (cheapest donation from clusters that can spare a point), then
// repeatedly applies the best single-point reassignment that never empties a
// cluster; on small problems, when no single move helps, also tries the best
// simultaneous pair of moves.
void refine_partition(const Eigen::MatrixXd& mc, Partition& part) {
  const int n = part.n();
  const int k = part.k;
  // sums(i, c) = sum of mc(i, j) over j currently in cluster c.
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n, k);
  std::vector<int> count(k, 0);
  for (int j = 0; j < n; ++j) {
    count[part.labels[j]]++;
    for (int i = 0; i < n; ++i) sums(i, part.labels[j]) += mc(i, j);
  }
  const auto move_delta = [&](int i, int to) {
    const int from = part.labels[i];
    // Ordered-pair objective change for moving i: joining cluster c adds
    // (1 - 2 mc(i,j)) per member j, leaving removes it.
    const double join = (count[to]) - 2.0 * sums(i, to);
    const double leave =
        (count[from] - 1) - 2.0 * (sums(i, from) - mc(i, i));
    return 2.0 * (join - leave);
  };
  const auto apply_move = [&](int i, int to) {
    const int from = part.labels[i];
    part.labels[i] = to;
    count[from]--;
    count[to]++;
    for (int r = 0; r < n; ++r) {
      sums(r, from) -= mc(r, i);
      sums(r, to) += mc(r, i);
    }
  };

  for (;;) {
    int empty = -1;
    for (int c = 0; c < k; ++c)
      if (count[c] == 0) { empty = c; break; }
    if (empty < 0) break;
    int best_i = -1;
    double best_delta = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (count[part.labels[i]] <= 1) continue;
      const double delta = move_delta(i, empty);
      if (delta < best_delta) {
        best_delta = delta;
        best_i = i;
      }
    }
    if (best_i < 0) break;  // fewer points than clusters
    apply_move(best_i, empty);
  }

  for (;;) {
    double best = -1e-9;
    int best_i = -1, best_c = -1;
    for (int i = 0; i < n; ++i) {
      const int from = part.labels[i];
      if (count[from] <= 1) continue;
      for (int c = 0; c < k; ++c) {
        if (c == from) continue;
        const double delta = move_delta(i, c);
        if (delta < best) {
          best = delta;
          best_i = i;
          best_c = c;
        }
      }
    }
    if (best_i >= 0) {
      apply_move(best_i, best_c);
      continue;
    }
    if (n > 64) break;
    // Pair moves, evaluated against the exact objective.
    const double current = consensus_objective(mc, part);
    double best_pair = current - 1e-9;
    int p1 = -1, c1 = -1, p2 = -1, c2 = -1;
    Partition trial = part;
    for (int i = 0; i < n; ++i) {
      for (int ci = 0; ci < k; ++ci) {
        if (ci == part.labels[i]) continue;
        for (int j = i + 1; j < n; ++j) {
          for (int cj = 0; cj < k; ++cj) {
            if (cj == part.labels[j]) continue;
            trial.labels = part.labels;
            trial.labels[i] = ci;
            trial.labels[j] = cj;
            std::vector<int> cnt(k, 0);
            for (int l : trial.labels) cnt[l]++;
            if (std::count(cnt.begin(), cnt.end(), 0) > 0) continue;
            const double obj = consensus_objective(mc, trial);
            if (obj < best_pair) {
              best_pair = obj;
              p1 = i;
              c1 = ci;
              p2 = j;
              c2 = cj;
            }
          }
        }
      }
    }
    if (p1 < 0) break;
    apply_move(p1, c1);
    apply_move(p2, c2);
  }
}

}  // namespace

ConsensusResult consensus(const std::vector<Partition>& parts, int k, Rng& rng,
                          const ConsensusOptions& opts) {
  if (parts.empty()) throw InvalidArgument("consensus: no partitions given");
  if (k < 1) throw InvalidArgument("consensus: k must be at least 1");
  const int n = parts[0].n();
  if (k > n) throw InvalidArgument("consensus: k exceeds the row count");

  ConsensusResult result;
  result.mean_conn = mean_connectivity(parts);
  const Eigen::MatrixXd& mc = result.mean_conn;

  // Symmetric NMF of mc at rank k, multiplicative updates.
  Eigen::MatrixXd Q(n, k);
  {
    Partition seed = kmeans(mc, k, rng);
    Q.setZero();
    for (int i = 0; i < n; ++i) Q(i, seed.labels[i]) = 1.0;
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c) Q(i, c) += 1e-3 * rng.uniform();
  }
  const double mc_norm2 = mc.squaredNorm();
  double prev_obj = std::numeric_limits<double>::infinity();
  result.nmf_converged = false;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Eigen::MatrixXd MQ = mc * Q;
    const Eigen::MatrixXd QtQ = Q.transpose() * Q;
    const double obj =
        mc_norm2 - 2.0 * (Q.array() * MQ.array()).sum() + QtQ.squaredNorm();
    if (iter > 0 && std::abs(prev_obj - obj) <=
                        opts.tol * std::max(1.0, std::abs(prev_obj))) {
      result.nmf_converged = true;
      break;
    }
    prev_obj = obj;
    const Eigen::MatrixXd QQtQ = Q * QtQ;
    Q = (Q.array() * (0.5 + 0.5 * MQ.array() / (QQtQ.array() + 1e-12)))
            .matrix();
  }

  // Harden the factor, guarantee occupancy, and polish.
  Partition hardened;
  hardened.k = k;
  hardened.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (Q(i, c) > Q(i, best)) best = c;
    hardened.labels[i] = best;
  }
  refine_partition(mc, hardened);
  double best_obj = consensus_objective(mc, hardened);
  Partition best_part = hardened;

  // Every input partition that fits the requested k is a candidate start.
  for (const Partition& p : parts) {
    if (p.k > k) continue;
    Partition cand;
    cand.k = k;
    cand.labels = p.labels;
    refine_partition(mc, cand);
    const double obj = consensus_objective(mc, cand);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best_part = cand;
    }
  }

  result.partition = std::move(best_part);
  result.objective = best_obj;
  return result;
}

namespace {

// Nearest-centroid extension with uniform random choice among exact ties.
std::vector<int> extend_by_centroid(const Eigen::MatrixXd& data,
                                    const Eigen::MatrixXd& centroids,
                                    Rng& rng) {
  const Eigen::Index n = data.rows();
  std::vector<int> labels(n);
  std::vector<int> tied;
  for (Eigen::Index i = 0; i < n; ++i) {
    double bestd = std::numeric_limits<double>::infinity();
    tied.clear();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (data.row(i) - centroids.row(c)).squaredNorm();
      if (d < bestd) {
        bestd = d;
        tied.assign(1, static_cast<int>(c));
      } else if (d == bestd) {
        tied.push_back(static_cast<int>(c));
      }
    }
    labels[i] = tied.size() == 1
                    ? tied[0]
                    : tied[rng.uniform_index(tied.size())];
  }
  return labels;
}

Partition cluster_and_extend(const Eigen::MatrixXd& data,
                             const ClustererSpec& spec, Rng& rng) {
  const Eigen::Index n = data.rows();
  for (int attempt = 0;; ++attempt) {
    std::vector<Eigen::Index> idx(n);
    for (Eigen::Index i = 0; i < n; ++i)
      idx[i] = static_cast<Eigen::Index>(rng.uniform_index(n));
    Eigen::MatrixXd sample(n, data.cols());
    for (Eigen::Index i = 0; i < n; ++i) sample.row(i) = data.row(idx[i]);
    try {
      Partition part;
      part.k = spec.k;
      if (spec.method == ClusterMethod::mixture) {
        const MixtureModel fit = em_fit(sample, spec.k, spec.cov_model, rng);
        part = classify(fit, data);
      } else {
        const Partition on_sample = run_clusterer(sample, spec, rng);
        Eigen::MatrixXd centroids =
            Eigen::MatrixXd::Zero(spec.k, data.cols());
        std::vector<int> count(spec.k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
          centroids.row(on_sample.labels[i]) += sample.row(i);
          count[on_sample.labels[i]]++;
        }
        for (int c = 0; c < spec.k; ++c)
          if (count[c] > 0) centroids.row(c) /= static_cast<double>(count[c]);
        part.labels = extend_by_centroid(data, centroids, rng);
      }
      return part;
    } catch (const Error&) {
      if (attempt >= 4) throw;
    }
  }
}

}  // namespace

double instability_single(const Eigen::MatrixXd& data,
                          const ClustererSpec& spec, int b, Rng& rng) {
  if (b < 1) throw InvalidArgument("instability_single: b must be positive");
  const Eigen::Index n = data.rows();
  if (n < 2) throw InvalidArgument("instability_single: too few rows");

  // Standardize once so bootstrap clusterings and extensions share a scale.
  Eigen::MatrixXd work = data;
  ClustererSpec inner = spec;
  if (spec.standardize) {
    work = standardize(data);
    inner.standardize = false;
  }

  const double nn = static_cast<double>(n) * static_cast<double>(n);
  double total = 0.0;
  for (int r = 0; r < b; ++r) {
    Rng round = rng.child(kStageRound, r);
    const Partition first = cluster_and_extend(work, inner, round);
    const Partition second = cluster_and_extend(work, inner, round);
    total += mirkin(first, second) / nn;
  }
  return total / static_cast<double>(b);
}

double total_instability(const std::vector<Partition>& parts,
                         const std::vector<double>& within) {
  const size_t m = parts.size();
  if (m == 0) throw InvalidArgument("total_instability: no partitions");
  if (within.size() != m)
    throw InvalidArgument(
        "total_instability: within-copy instabilities do not match the "
        "partition count");
  const double n = static_cast<double>(parts[0].n());
  double mean_within = 0.0;
  for (double v : within) mean_within += v;
  mean_within /= static_cast<double>(m);
  double between = 0.0;
  for (size_t a = 0; a < m; ++a)
    for (size_t b2 = a + 1; b2 < m; ++b2)
      between += 2.0 * mirkin(parts[a], parts[b2]) / (n * n);
  between /= static_cast<double>(m * m);
  return mean_within + between;
}

ChooseKResult choose_k(const Dataset& ds, Engine engine, ClusterMethod method,
                       int k_max, int m, int b, Rng& rng,
                       const PredictorMatrix& predictors) {
  if (k_max < 2) throw InvalidArgument("choose_k: k_max must be at least 2");
  ChooseKResult result;
  result.best_k = 2;
  double best_total = std::numeric_limits<double>::infinity();
  for (int K = 2; K <= k_max; ++K) {
    Rng rng_k = rng.child(kStageScanImpute, K);
    Rng rng_imp = rng_k.child(1);
    const ImputationResult imp =
        impute(ds, engine, K, m, rng_imp, predictors);
    std::vector<Partition> parts;
    std::vector<double> within;
    const ClustererSpec spec = make_clusterer_spec(method, K);
    for (size_t c = 0; c < imp.completed.size(); ++c) {
      Rng rng_cl = rng_k.child(kStageScanCluster, c);
      parts.push_back(run_clusterer(imp.completed[c], spec, rng_cl));
      Rng rng_st = rng_k.child(kStageScanStability, c);
      within.push_back(instability_single(imp.completed[c], spec, b, rng_st));
    }
    const double total = total_instability(parts, within);
    result.ks.push_back(K);
    result.totals.push_back(total);
    if (total < best_total) {
      best_total = total;
      result.best_k = K;
    }
  }
  return result;
}

}  // namespace miclust
