#include "gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "errors.hpp"

namespace miclust {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct Factor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double logdet = 0.0;
};

Factor factorize(const Eigen::MatrixXd& cov, int component) {
  Factor f;
  f.llt.compute(cov);
  if (f.llt.info() != Eigen::Success)
    throw NumericError("mixture covariance is not positive definite", component);
  const Eigen::MatrixXd L = f.llt.matrixL();
  for (Eigen::Index i = 0; i < L.rows(); ++i)
    f.logdet += 2.0 * std::log(L(i, i));
  return f;
}

// Log Gaussian density of every row of X under N(mu, cov factored as f).
Eigen::VectorXd log_gauss_rows(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& mu, const Factor& f) {
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd Y = X.rowwise() - mu.transpose();
  const Eigen::MatrixXd W =
      f.llt.matrixL().solve(Eigen::MatrixXd(Y.transpose()));
  const Eigen::VectorXd d2 = W.colwise().squaredNorm();
  return (-0.5 * (static_cast<double>(p) * kLog2Pi + f.logdet)) -
         0.5 * d2.array();
}

// Row-wise softmax of a score matrix in log space; returns the log-sum-exp
// per row (the row log-likelihoods) and overwrites scores with probabilities.
Eigen::VectorXd softmax_rows(Eigen::MatrixXd& scores) {
  const Eigen::Index n = scores.rows();
  Eigen::VectorXd lse(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = scores.row(i).maxCoeff();
    const double s = (scores.row(i).array() - m).exp().sum();
    lse[i] = m + std::log(s);
    scores.row(i) = (scores.row(i).array() - lse[i]).exp();
  }
  return lse;
}

Eigen::MatrixXd global_covariance(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd mu = X.colwise().mean();
  Eigen::MatrixXd Y = X.rowwise() - mu.transpose();
  return (Y.transpose() * Y) / static_cast<double>(X.rows());
}

}  // namespace

std::vector<int> kmeanspp_rows(const Eigen::MatrixXd& X, int k, Rng& rng) {
  const Eigen::Index n = X.rows();
  std::vector<int> centers;
  std::vector<bool> chosen(n, false);
  Eigen::VectorXd d2 =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.uniform_index(n));
  centers.push_back(first);
  chosen[first] = true;
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (X.row(i) - X.row(centers.back())).squaredNorm();
      if (d < d2[i]) d2[i] = d;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!chosen[i]) total += d2[i];
    int pick = -1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        u -= d2[i];
        if (u < 0.0) { pick = static_cast<int>(i); break; }
      }
    }
    if (pick < 0) {
      // All remaining rows coincide with chosen centers; take a uniform
      // unchosen index.
      std::vector<int> free;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(static_cast<int>(i));
      pick = free[rng.uniform_index(free.size())];
    }
    centers.push_back(pick);
    chosen[pick] = true;
  }
  return centers;
}

namespace {

struct EmRun {
  MixtureModel model;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

EmRun run_em(const Eigen::MatrixXd& X, int k, CovModel cov_model,
             Eigen::MatrixXd resp, const EmOptions& opts) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  MixtureModel m;
  m.cov_model = cov_model;
  m.weights.resize(k);
  m.means.assign(k, Eigen::VectorXd::Zero(p));
  m.covs.assign(cov_model == CovModel::shared ? 1 : k,
                Eigen::MatrixXd::Zero(p, p));
  const Eigen::MatrixXd global_cov = global_covariance(X);

  EmRun run;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // M-step from current responsibilities.
    Eigen::VectorXd counts = resp.colwise().sum();
    std::vector<int> empties;
    for (int w = 0; w < k; ++w)
      if (counts[w] < 1e-6) empties.push_back(w);
    if (!empties.empty()) {
      // Re-seed dead components at the rows the model explains worst.
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      Eigen::VectorXd best = resp.rowwise().maxCoeff();
      std::sort(order.begin(), order.end(),
                [&](int a, int b) { return best[a] < best[b]; });
      size_t next = 0;
      for (int w : empties) {
        const int row = order[next++ % order.size()];
        resp.row(row).setZero();
        resp(row, w) = 1.0;
      }
      counts = resp.colwise().sum();
    }
    m.weights = counts / static_cast<double>(n);
    for (int w = 0; w < k; ++w)
      m.means[w] = (resp.col(w).transpose() * X).transpose() / counts[w];
    if (cov_model == CovModel::shared) {
      Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
      for (int w = 0; w < k; ++w) {
        Eigen::MatrixXd Y = X.rowwise() - m.means[w].transpose();
        pooled.noalias() +=
            Y.transpose() * (Y.array().colwise() * resp.col(w).array()).matrix();
      }
      pooled /= static_cast<double>(n);
      ensure_spd(pooled, -1);
      m.covs[0] = pooled;
    } else {
      for (int w = 0; w < k; ++w) {
        Eigen::MatrixXd Y = X.rowwise() - m.means[w].transpose();
        Eigen::MatrixXd c =
            Y.transpose() * (Y.array().colwise() * resp.col(w).array()).matrix();
        c /= counts[w];
        if (counts[w] < 2.0) c = global_cov;
        ensure_spd(c, w);
        m.covs[w] = c;
      }
    }

    // E-step under the refreshed parameters.
    Eigen::MatrixXd scores(n, k);
    for (int w = 0; w < k; ++w) {
      const Factor f = factorize(m.cov(w), cov_model == CovModel::shared ? -1 : w);
      scores.col(w) =
          log_gauss_rows(X, m.means[w], f).array() + std::log(m.weights[w]);
    }
    const double ll = softmax_rows(scores).sum();
    resp = scores;
    run.trace.push_back(ll);
    if (iter > 0 && std::abs(ll - prev_ll) <=
                        opts.tol * std::max(1.0, std::abs(prev_ll))) {
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }
  run.model = std::move(m);
  run.loglik = prev_ll;
  return run;
}

}  // namespace

void ensure_spd(Eigen::MatrixXd& m, int component) {
  m = ((m + m.transpose()) * 0.5).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return;
  double base = m.diagonal().mean();
  if (!(base > 0.0)) base = 1e-6;
  double jitter = 1e-6 * base;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Eigen::MatrixXd padded = m;
    padded.diagonal().array() += jitter;
    llt.compute(padded);
    if (llt.info() == Eigen::Success) {
      m = padded;
      return;
    }
    jitter *= 100.0;
  }
  throw NumericError("covariance could not be repaired to positive definite",
                     component);
}

MixtureModel em_fit(const Eigen::MatrixXd& data, int k, CovModel cov_model,
                    Rng& rng, const EmOptions& opts) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (k < 1) throw DegenerateFit("em_fit: k must be at least 1");
  if (n <= k)
    throw DegenerateFit("em_fit: " + std::to_string(n) +
                        " rows cannot support " + std::to_string(k) +
                        " components");
  if (p < 1) throw DegenerateFit("em_fit: data has no columns");
  if (!data.allFinite())
    throw InvalidArgument("em_fit: data contains non-finite values");
  bool identical = true;
  for (Eigen::Index i = 1; i < n && identical; ++i)
    identical = (data.row(i) == data.row(0));
  if (identical) throw DegenerateFit("em_fit: all rows are identical");

  if (k == 1 && !opts.warm_start) {
    // Closed form; consumes no randomness.
    MixtureModel m;
    m.cov_model = cov_model;
    m.weights = Eigen::VectorXd::Ones(1);
    m.means.assign(1, data.colwise().mean());
    Eigen::MatrixXd cov = global_covariance(data);
    ensure_spd(cov, cov_model == CovModel::shared ? -1 : 0);
    m.covs.assign(1, cov);
    if (opts.loglik_trace) {
      opts.loglik_trace->clear();
      opts.loglik_trace->push_back(mixture_loglik(m, data));
    }
    return m;
  }

  EmRun best;
  bool have_best = false;
  const int runs = opts.warm_start ? 1 : std::max(1, opts.restarts);
  std::string last_failure;
  for (int r = 0; r < runs; ++r) {
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    if (opts.warm_start) {
      const MixtureModel& w0 = *opts.warm_start;
      if (w0.k() != k || w0.p() != p)
        throw InvalidArgument("em_fit: warm start has mismatched dimensions");
      Eigen::MatrixXd scores(n, k);
      for (int w = 0; w < k; ++w) {
        const Factor f =
            factorize(w0.cov(w), w0.cov_model == CovModel::shared ? -1 : w);
        scores.col(w) = log_gauss_rows(data, w0.means[w], f).array() +
                        std::log(w0.weights[w]);
      }
      softmax_rows(scores);
      resp = scores;
    } else {
      const std::vector<int> centers = kmeanspp_rows(data, k, rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        int bestc = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (data.row(i) - data.row(centers[c])).squaredNorm();
          if (d < bestd) { bestd = d; bestc = c; }
        }
        resp(i, bestc) = 1.0;
      }
    }
    try {
      EmRun run = run_em(data, k, cov_model, std::move(resp), opts);
      if (!have_best || run.loglik > best.loglik) {
        best = std::move(run);
        have_best = true;
      }
    } catch (const NumericError& e) {
      last_failure = e.what();
    }
  }
  if (!have_best)
    throw DegenerateFit("em_fit: every start failed numerically (" +
                        last_failure + ")");
  if (opts.loglik_trace) *opts.loglik_trace = best.trace;
  return best.model;
}

Eigen::VectorXd discriminant_scores(const MixtureModel& model,
                                    const Eigen::VectorXd& row,
                                    const std::vector<bool>& observed) {
  const int k = model.k();
  const int p = model.p();
  if (static_cast<int>(observed.size()) != p || row.size() != p)
    throw InvalidArgument("discriminant_scores: row/mask size mismatch");
  std::vector<int> obs;
  for (int j = 0; j < p; ++j)
    if (observed[j]) obs.push_back(j);
  if (obs.empty()) return model.weights;

  const int q = static_cast<int>(obs.size());
  Eigen::VectorXd z(q);
  for (int a = 0; a < q; ++a) z[a] = row[obs[a]];

  Eigen::VectorXd scores(k);
  const bool shared = model.cov_model == CovModel::shared;
  Eigen::LLT<Eigen::MatrixXd> shared_llt;
  double shared_logdet = 0.0;
  for (int w = 0; w < k; ++w) {
    double logdet;
    Eigen::VectorXd diffs(q);
    const Eigen::MatrixXd& full = model.cov(w);
    if (shared && w > 0) {
      logdet = shared_logdet;
      for (int a = 0; a < q; ++a) diffs[a] = z[a] - model.means[w][obs[a]];
      const Eigen::VectorXd half = shared_llt.matrixL().solve(diffs);
      scores[w] = std::log(model.weights[w]) - 0.5 * logdet -
                  0.5 * half.squaredNorm();
      continue;
    }
    Eigen::MatrixXd sub(q, q);
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) sub(a, b) = full(obs[a], obs[b]);
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() != Eigen::Success)
      throw NumericError("discriminant_scores: restricted covariance singular",
                         shared ? -1 : w);
    logdet = 0.0;
    const Eigen::MatrixXd L = llt.matrixL();
    for (int a = 0; a < q; ++a) logdet += 2.0 * std::log(L(a, a));
    if (shared) {
      shared_llt = llt;
      shared_logdet = logdet;
    }
    for (int a = 0; a < q; ++a) diffs[a] = z[a] - model.means[w][obs[a]];
    const Eigen::VectorXd half = llt.matrixL().solve(diffs);
    scores[w] =
        std::log(model.weights[w]) - 0.5 * logdet - 0.5 * half.squaredNorm();
  }
  const double mx = scores.maxCoeff();
  Eigen::VectorXd probs = (scores.array() - mx).exp();
  return probs / probs.sum();
}

Partition classify(const MixtureModel& model, const Eigen::MatrixXd& data) {
  const int k = model.k();
  if (data.cols() != model.p())
    throw InvalidArgument("classify: column count differs from model");
  if (!data.allFinite())
    throw InvalidArgument("classify: data contains non-finite values");
  const Eigen::Index n = data.rows();
  Eigen::MatrixXd scores(n, k);
  for (int w = 0; w < k; ++w) {
    const Factor f =
        factorize(model.cov(w), model.cov_model == CovModel::shared ? -1 : w);
    scores.col(w) =
        log_gauss_rows(data, model.means[w], f).array() +
        std::log(model.weights[w]);
  }
  Partition part;
  part.k = k;
  part.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int bestw = 0;
    for (int w = 1; w < k; ++w)
      if (scores(i, w) > scores(i, bestw)) bestw = w;
    part.labels[i] = bestw;
  }
  return part;
}

double mixture_loglik(const MixtureModel& model, const Eigen::MatrixXd& data) {
  const int k = model.k();
  Eigen::MatrixXd scores(data.rows(), k);
  for (int w = 0; w < k; ++w) {
    const Factor f =
        factorize(model.cov(w), model.cov_model == CovModel::shared ? -1 : w);
    scores.col(w) = log_gauss_rows(data, model.means[w], f).array() +
                    std::log(model.weights[w]);
  }
  return softmax_rows(scores).sum();
}

Eigen::VectorXd draw_conditional_missing(const MixtureModel& model,
                                         const Eigen::VectorXd& row,
                                         const std::vector<bool>& observed,
                                         int component, Rng& rng) {
  const int p = model.p();
  if (static_cast<int>(observed.size()) != p || row.size() != p)
    throw InvalidArgument("draw_conditional_missing: row/mask size mismatch");
  if (component < 0 || component >= model.k())
    throw InvalidArgument("draw_conditional_missing: component out of range");
  std::vector<int> obs, mis;
  for (int j = 0; j < p; ++j) (observed[j] ? obs : mis).push_back(j);
  if (mis.empty()) return row;

  const Eigen::VectorXd& mu = model.means[component];
  const Eigen::MatrixXd& cov = model.cov(component);
  Eigen::VectorXd out = row;

  if (obs.empty()) {
    const Eigen::VectorXd draw = draw_mvnormal(mu, cov, rng);
    for (int j = 0; j < p; ++j) out[j] = draw[j];
    return out;
  }

  const int no = static_cast<int>(obs.size());
  const int nm = static_cast<int>(mis.size());
  Eigen::MatrixXd Soo(no, no), Smo(nm, no), Smm(nm, nm);
  Eigen::VectorXd zo(no), mo(no), mm(nm);
  for (int a = 0; a < no; ++a) {
    zo[a] = row[obs[a]];
    mo[a] = mu[obs[a]];
    for (int b = 0; b < no; ++b) Soo(a, b) = cov(obs[a], obs[b]);
  }
  for (int a = 0; a < nm; ++a) {
    mm[a] = mu[mis[a]];
    for (int b = 0; b < no; ++b) Smo(a, b) = cov(mis[a], obs[b]);
    for (int b = 0; b < nm; ++b) Smm(a, b) = cov(mis[a], mis[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Soo);
  if (llt.info() != Eigen::Success) {
    ensure_spd(Soo, component);
    llt.compute(Soo);
    if (llt.info() != Eigen::Success)
      throw NumericError("draw_conditional_missing: observed block singular",
                         component);
  }
  const Eigen::MatrixXd reg = llt.solve(Smo.transpose()).transpose();
  const Eigen::VectorXd cond_mean = mm + reg * (zo - mo);
  Eigen::MatrixXd cond_cov = Smm - reg * Smo.transpose();
  cond_cov = ((cond_cov + cond_cov.transpose()) * 0.5).eval();
  const Eigen::VectorXd draw = draw_mvnormal(cond_mean, cond_cov, rng);
  for (int a = 0; a < nm; ++a) out[mis[a]] = draw[a];
  return out;
}

}  // namespace miclust
