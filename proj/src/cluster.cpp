#include "cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace miclust {

ClusterMethod parse_cluster_method(const std::string& name) {
  if (name == "kmeans") return ClusterMethod::kmeans;
  if (name == "pam") return ClusterMethod::pam;
  if (name == "ward") return ClusterMethod::ward;
  if (name == "mixture") return ClusterMethod::mixture;
  throw InvalidArgument("unknown clustering method '" + name + "'");
}

std::string cluster_method_name(ClusterMethod m) {
  switch (m) {
    case ClusterMethod::kmeans: return "kmeans";
    case ClusterMethod::pam: return "pam";
    case ClusterMethod::ward: return "ward";
    case ClusterMethod::mixture: return "mixture";
  }
  throw InvalidArgument("unknown clustering method value");
}

ClustererSpec make_clusterer_spec(ClusterMethod method, int k) {
  ClustererSpec spec;
  spec.method = method;
  spec.k = k;
  spec.standardize = method != ClusterMethod::mixture;
  return spec;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& data) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (n < 2) throw InvalidArgument("standardize: needs at least two rows");
  Eigen::MatrixXd out(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = data.col(j).mean();
    const double var =
        (data.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0))
      throw InvalidArgument("standardize: column " + std::to_string(j + 1) +
                            " has zero variance");
    out.col(j) = (data.col(j).array() - mean) / sd;
  }
  return out;
}

namespace {

void check_complete(const Eigen::MatrixXd& data, const char* who) {
  if (!data.allFinite())
    throw InvalidArgument(std::string(who) +
                          ": data contains non-finite values");
}

// Nearest centroid with ties to the lowest cluster index.
int nearest_row(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x) {
  int best = 0;
  double bestd = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (x - centroids.row(c)).squaredNorm();
    if (d < bestd) {
      bestd = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

double kmeans_wcss(const Eigen::MatrixXd& data, const Partition& part) {
  const int k = part.k;
  const Eigen::Index p = data.cols();
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, p);
  std::vector<int> counts(k, 0);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    centroids.row(part.labels[i]) += data.row(i);
    counts[part.labels[i]]++;
  }
  for (int c = 0; c < k; ++c)
    if (counts[c] > 0) centroids.row(c) /= static_cast<double>(counts[c]);
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    wcss += (data.row(i) - centroids.row(part.labels[i])).squaredNorm();
  return wcss;
}

Partition kmeans(const Eigen::MatrixXd& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (k < 1 || k > n)
    throw InvalidArgument("kmeans: k must lie in [1, n]");
  check_complete(data, "kmeans");

  Partition best;
  double best_wcss = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 10; ++restart) {
    const std::vector<int> seeds = kmeanspp_rows(data, k, rng);
    Eigen::MatrixXd centroids(k, p);
    for (int c = 0; c < k; ++c) centroids.row(c) = data.row(seeds[c]);

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int c = nearest_row(centroids, data.row(i));
        if (c != labels[i]) {
          labels[i] = c;
          changed = true;
        }
      }
      std::vector<int> counts(k, 0);
      for (int l : labels) counts[l]++;
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) continue;
        // Re-seed an empty cluster at the point farthest from its centroid.
        Eigen::Index far = 0;
        double fard = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (counts[labels[i]] <= 1) continue;
          const double d = (data.row(i) - centroids.row(labels[i])).squaredNorm();
          if (d > fard) {
            fard = d;
            far = i;
          }
        }
        counts[labels[far]]--;
        labels[far] = c;
        counts[c] = 1;
        changed = true;
      }
      centroids.setZero();
      for (Eigen::Index i = 0; i < n; ++i) centroids.row(labels[i]) += data.row(i);
      for (int c = 0; c < k; ++c)
        if (counts[c] > 0) centroids.row(c) /= static_cast<double>(counts[c]);
      if (!changed) break;
    }

    Partition part;
    part.k = k;
    part.labels = labels;
    const double wcss = kmeans_wcss(data, part);
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best = std::move(part);
    }
  }
  return best;
}

Partition pam(const Eigen::MatrixXd& data, int k, Rng&,
              std::vector<int>* medoids_out) {
  const Eigen::Index n = data.rows();
  if (k < 1 || k > n) throw InvalidArgument("pam: k must lie in [1, n]");
  check_complete(data, "pam");

  Eigen::MatrixXd D(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (data.row(i) - data.row(j)).norm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }

  // BUILD: first the row minimizing total distance, then greedy additions.
  std::vector<int> medoids;
  std::vector<bool> is_medoid(n, false);
  {
    Eigen::Index first = 0;
    double bestsum = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = D.row(i).sum();
      if (s < bestsum) {
        bestsum = s;
        first = i;
      }
    }
    medoids.push_back(static_cast<int>(first));
    is_medoid[first] = true;
  }
  Eigen::VectorXd dnear = D.col(medoids[0]);
  while (static_cast<int>(medoids.size()) < k) {
    int pick = -1;
    double bestgain = -std::numeric_limits<double>::infinity();
    for (Eigen::Index cand = 0; cand < n; ++cand) {
      if (is_medoid[cand]) continue;
      double gain = 0.0;
      for (Eigen::Index j = 0; j < n; ++j)
        gain += std::max(0.0, dnear[j] - D(cand, j));
      if (gain > bestgain) {
        bestgain = gain;
        pick = static_cast<int>(cand);
      }
    }
    medoids.push_back(pick);
    is_medoid[pick] = true;
    dnear = dnear.cwiseMin(D.col(pick));
  }

  // SWAP: steepest descent over (medoid, candidate) exchanges, with the
  // usual nearest/second-nearest bookkeeping so each exchange costs O(n).
  Eigen::VectorXd d1(n), d2(n);
  std::vector<int> near1(n);
  const auto refresh_nearest = [&]() {
    for (Eigen::Index j = 0; j < n; ++j) {
      double a = std::numeric_limits<double>::infinity();
      double b = std::numeric_limits<double>::infinity();
      int na = -1;
      for (size_t c = 0; c < medoids.size(); ++c) {
        const double dd = D(medoids[c], j);
        if (dd < a) {
          b = a;
          a = dd;
          na = static_cast<int>(c);
        } else if (dd < b) {
          b = dd;
        }
      }
      d1[j] = a;
      d2[j] = b;
      near1[j] = na;
    }
  };
  refresh_nearest();
  for (;;) {
    double best_delta = -1e-12;
    int best_m = -1, best_h = -1;
    for (size_t mi = 0; mi < medoids.size(); ++mi) {
      for (Eigen::Index h = 0; h < n; ++h) {
        if (is_medoid[h]) continue;
        double delta = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const double dh = D(h, j);
          if (dh < d1[j])
            delta += dh - d1[j];
          else if (near1[j] == static_cast<int>(mi))
            delta += std::min(d2[j], dh) - d1[j];
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_m = static_cast<int>(mi);
          best_h = static_cast<int>(h);
        }
      }
    }
    if (best_m < 0) break;
    is_medoid[medoids[best_m]] = false;
    medoids[best_m] = best_h;
    is_medoid[best_h] = true;
    refresh_nearest();
  }

  std::sort(medoids.begin(), medoids.end());
  if (medoids_out != nullptr) *medoids_out = medoids;
  Partition part;
  part.k = k;
  part.labels.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    int best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < medoids.size(); ++c) {
      if (D(medoids[c], j) < bestd) {
        bestd = D(medoids[c], j);
        best = static_cast<int>(c);
      }
    }
    part.labels[j] = best;
  }
  return part;
}

Partition ward_hclust(const Eigen::MatrixXd& data, int k,
                      std::vector<double>* merge_heights) {
  const Eigen::Index n = data.rows();
  if (k < 1 || k > n)
    throw InvalidArgument("ward_hclust: k must lie in [1, n]");
  check_complete(data, "ward_hclust");

  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (data.row(i) - data.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  std::vector<bool> active(n, true);
  std::vector<double> size(n, 1.0);

  const auto nearest = [&](int i) {
    int best = -1;
    double bestd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!active[j] || static_cast<int>(j) == i) continue;
      if (d(i, j) < bestd) {
        bestd = d(i, j);
        best = static_cast<int>(j);
      }
    }
    return best;
  };

  // Full agglomeration first. The chain does not visit merges in height
  // order, so the k-cluster cut must pick the n - k cheapest merges of the
  // finished dendrogram rather than the first n - k performed.
  struct Merge {
    int a, b;  // cluster representatives (minimum row index of each side)
    double height;
  };
  std::vector<Merge> log;
  log.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  std::vector<int> chain;
  while (static_cast<Eigen::Index>(log.size()) < n - 1) {
    if (chain.empty()) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(static_cast<int>(i));
          break;
        }
    }
    const int top = chain.back();
    const int nn = nearest(top);
    if (chain.size() >= 2 && nn == chain[chain.size() - 2]) {
      const int a = std::min(top, nn);
      const int b = std::max(top, nn);
      log.push_back(Merge{a, b, d(a, b)});
      // Lance-Williams update for Ward linkage on squared distances.
      for (Eigen::Index c = 0; c < n; ++c) {
        if (!active[c] || static_cast<int>(c) == a || static_cast<int>(c) == b)
          continue;
        const double v = ((size[a] + size[c]) * d(a, c) +
                          (size[b] + size[c]) * d(b, c) -
                          size[c] * d(a, b)) /
                         (size[a] + size[b] + size[c]);
        d(a, c) = v;
        d(c, a) = v;
      }
      size[a] += size[b];
      active[b] = false;
      chain.pop_back();
      chain.pop_back();
    } else {
      chain.push_back(nn);
    }
  }
  if (merge_heights != nullptr) {
    merge_heights->clear();
    for (const Merge& m : log) merge_heights->push_back(m.height);
  }

  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) {
                     if (log[x].height != log[y].height)
                       return log[x].height < log[y].height;
                     return x < y;
                   });

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find_root = [&](int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (Eigen::Index m = 0; m < n - k; ++m) {
    const Merge& mg = log[order[static_cast<std::size_t>(m)]];
    const int ra = find_root(mg.a);
    const int rb = find_root(mg.b);
    parent[std::max(ra, rb)] = std::min(ra, rb);
  }

  std::vector<int> roots;
  for (Eigen::Index i = 0; i < n; ++i)
    if (find_root(static_cast<int>(i)) == static_cast<int>(i))
      roots.push_back(static_cast<int>(i));
  std::sort(roots.begin(), roots.end());
  std::vector<int> root_label(static_cast<std::size_t>(n), -1);
  for (std::size_t c = 0; c < roots.size(); ++c)
    root_label[static_cast<std::size_t>(roots[c])] = static_cast<int>(c);

  Partition part;
  part.k = k;
  part.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    part.labels[i] = root_label[find_root(static_cast<int>(i))];
  return part;
}

Partition mixture_cluster(const Eigen::MatrixXd& data, int k,
                          CovModel cov_model, Rng& rng) {
  const MixtureModel model = em_fit(data, k, cov_model, rng);
  return classify(model, data);
}

Partition run_clusterer(const Eigen::MatrixXd& data, const ClustererSpec& spec,
                        Rng& rng) {
  Eigen::MatrixXd scaled;
  const Eigen::MatrixXd* input = &data;
  if (spec.standardize) {
    scaled = standardize(data);
    input = &scaled;
  }
  switch (spec.method) {
    case ClusterMethod::kmeans: return kmeans(*input, spec.k, rng);
    case ClusterMethod::pam: return pam(*input, spec.k, rng);
    case ClusterMethod::ward: return ward_hclust(*input, spec.k);
    case ClusterMethod::mixture:
      return mixture_cluster(*input, spec.k, spec.cov_model, rng);
  }
  throw InvalidArgument("run_clusterer: unknown method");
}

}  // namespace miclust
