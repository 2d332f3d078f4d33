#include "fcs.hpp"

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
  kStageChain = 1,
  kStageInitEm = 2,
  kStageInitLabels = 3,
  kStageInitCells = 4,
  kStageRegression = 5,
  kStageImpute = 6,
  kStageBootstrap = 7,
  kStageFitLabels = 8,
  kStageTheta = 9,
  kStageLabels = 10,
};

enum class FcsMode { with_classes_pooled, with_classes_percluster, class_free };

std::uint64_t pack_jw(int j, int w) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(j)) << 32) |
         static_cast<std::uint32_t>(w);
}

struct ColumnInfo {
  std::vector<int> predictors;  // allowed regressor columns
  std::vector<int> obs_rows;
  std::vector<int> mis_rows;
};

// Draw component labels for complete rows: log densities under the model
// plus log shares, softmax, one categorical draw per row.
std::vector<int> draw_labels(const Eigen::MatrixXd& Z, const MixtureModel& fit,
                             const Eigen::VectorXd& shares, Rng& rng,
                             Eigen::MatrixXd* logdens_cache) {
  const Eigen::Index n = Z.rows();
  const int k = fit.k();
  Eigen::MatrixXd logdens;
  if (logdens_cache && logdens_cache->rows() == n &&
      logdens_cache->cols() == k) {
    logdens = *logdens_cache;
  } else {
    logdens.resize(n, k);
    for (int w = 0; w < k; ++w) {
      const Eigen::MatrixXd& cov = fit.cov(w);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success)
        throw NumericError("fcs: component covariance singular", w);
      double logdet = 0.0;
      const Eigen::MatrixXd L = llt.matrixL();
      for (Eigen::Index a = 0; a < L.rows(); ++a)
        logdet += 2.0 * std::log(L(a, a));
      Eigen::MatrixXd Y = Z.rowwise() - fit.means[w].transpose();
      const Eigen::MatrixXd W = llt.matrixL().solve(Eigen::MatrixXd(Y.transpose()));
      logdens.col(w) =
          (-0.5 * logdet) - 0.5 * W.colwise().squaredNorm().array();
    }
    if (logdens_cache) *logdens_cache = logdens;
  }
  std::vector<int> labels(n, 0);
  Eigen::VectorXd scores(k);
  Eigen::VectorXd probs(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int w = 0; w < k; ++w)
      scores[w] = logdens(i, w) + std::log(shares[w]);
    // Shift by the largest finite score so the exponentials stay
    // representable. Scores are finite or -inf, never NaN.
    double mx = -std::numeric_limits<double>::infinity();
    for (int w = 0; w < k; ++w)
      if (std::isfinite(scores[w]) && scores[w] > mx) mx = scores[w];
    if (std::isfinite(mx)) {
      probs = (scores.array() - mx).exp();
      probs /= probs.sum();
    } else {
      // Every component density underflowed for this row, so the likelihood
      // no longer separates the components at double precision. Fall back to
      // the mixing shares.
      double s = 0.0;
      for (int w = 0; w < k; ++w)
        s += (std::isfinite(shares[w]) && shares[w] > 0.0) ? shares[w] : 0.0;
      if (s > 0.0) {
        for (int w = 0; w < k; ++w)
          probs[w] = (std::isfinite(shares[w]) && shares[w] > 0.0)
                         ? shares[w] / s
                         : 0.0;
      } else {
        probs.setConstant(1.0 / static_cast<double>(k));
      }
    }
    labels[i] = draw_categorical(probs, rng);
  }
  return labels;
}

struct ChainEngine {
  const Dataset& ds;
  FcsMode mode;
  int k;
  int iterations;
  const PredictorMatrix& pred;
  int chain_index;
  std::vector<ChainRecord>* records;

  Eigen::Index n() const { return ds.n(); }
  Eigen::Index p() const { return ds.p(); }
  bool class_aware() const { return mode != FcsMode::class_free; }
  CovModel cov_model() const {
    return mode == FcsMode::with_classes_pooled ? CovModel::shared
                                                : CovModel::per_cluster;
  }

  Eigen::MatrixXd run(Rng chain_rng) const {
    std::vector<ColumnInfo> cols(p());
    for (int j = 0; j < p(); ++j) {
      for (int l = 0; l < p(); ++l)
        if (pred.allow[j][l]) cols[j].predictors.push_back(l);
      for (Eigen::Index i = 0; i < n(); ++i)
        (ds.mask(i, j) ? cols[j].obs_rows : cols[j].mis_rows)
            .push_back(static_cast<int>(i));
      if (cols[j].obs_rows.empty())
        throw ChainFailure("fcs: column " + std::to_string(j) +
                           " has no observed cells");
    }

    // Start from column means, then redraw the missing cells from their
    // conditional Gaussian under an initial mixture fit.
    Eigen::MatrixXd Z = ds.values;
    for (int j = 0; j < p(); ++j) {
      double mean = 0.0;
      for (int i : cols[j].obs_rows) mean += Z(i, j);
      mean /= static_cast<double>(cols[j].obs_rows.size());
      for (int i : cols[j].mis_rows) Z(i, j) = mean;
    }

    MixtureModel fit;
    try {
      Rng rng_init = chain_rng.child(kStageInitEm);
      fit = em_fit(Z, k, cov_model(), rng_init);
    } catch (const DegenerateFit& e) {
      throw ChainFailure(std::string("fcs: initial fit failed: ") + e.what());
    }

    std::vector<int> labels(n(), 0);
    if (class_aware()) {
      Rng rng_w0 = chain_rng.child(kStageInitLabels);
      std::vector<bool> observed(p());
      for (Eigen::Index i = 0; i < n(); ++i) {
        for (Eigen::Index j = 0; j < p(); ++j) observed[j] = ds.mask(i, j);
        const Eigen::VectorXd probs =
            discriminant_scores(fit, ds.values.row(i), observed);
        labels[i] = draw_categorical(probs, rng_w0);
      }
    }
    {
      Rng rng_z0 = chain_rng.child(kStageInitCells);
      std::vector<bool> observed(p());
      for (Eigen::Index i = 0; i < n(); ++i) {
        bool any_missing = false;
        for (Eigen::Index j = 0; j < p(); ++j) {
          observed[j] = ds.mask(i, j);
          any_missing = any_missing || !observed[j];
        }
        if (!any_missing) continue;
        const Eigen::VectorXd row =
            draw_conditional_missing(fit, Z.row(i), observed, labels[i], rng_z0);
        Z.row(i) = row.transpose();
      }
    }

    for (int iter = 1; iter <= iterations; ++iter) {
      cycle_columns(Z, labels, cols, chain_rng, iter);
      if (class_aware())
        refresh_classes(Z, labels, fit, chain_rng, iter);
    }
    return Z;
  }

  // One chained-equations pass over the incomplete columns.
  void cycle_columns(Eigen::MatrixXd& Z, const std::vector<int>& labels,
                     const std::vector<ColumnInfo>& cols, const Rng& chain_rng,
                     int iter) const {
    const bool percluster = mode == FcsMode::with_classes_percluster;
    for (int j = 0; j < p(); ++j) {
      const ColumnInfo& info = cols[j];
      if (info.mis_rows.empty()) continue;
      const int npred = static_cast<int>(info.predictors.size());

      if (percluster) {
        const int q = 1 + npred;
        // One regression per component on its own observed rows; small
        // components borrow the pooled draw.
        std::vector<std::vector<int>> comp_obs(k), comp_mis(k);
        for (int i : info.obs_rows) comp_obs[labels[i]].push_back(i);
        for (int i : info.mis_rows) comp_mis[labels[i]].push_back(i);
        RegressionDraw pooled;
        bool have_pooled = false;
        std::vector<RegressionDraw> comp_draw(k);
        std::vector<bool> comp_uses_pooled(k, false);
        for (int w = 0; w < k; ++w) {
          if (comp_mis[w].empty()) continue;
          const int nw = static_cast<int>(comp_obs[w].size());
          if (k > 1 && nw < q + 2) {
            comp_uses_pooled[w] = true;
            if (!have_pooled) {
              pooled = pooled_draw(Z, labels, info, j,
                                   chain_rng.child(kStageRegression, iter,
                                                   pack_jw(j, k)));
              have_pooled = true;
            }
            continue;
          }
          if (nw <= q)
            throw ChainFailure("fcs: column " + std::to_string(j) +
                               " has too few observed rows in component " +
                               std::to_string(w));
          Eigen::MatrixXd X(nw, q);
          Eigen::VectorXd y(nw);
          for (int a = 0; a < nw; ++a) {
            const int i = comp_obs[w][a];
            X(a, 0) = 1.0;
            for (int b = 0; b < npred; ++b)
              X(a, 1 + b) = Z(i, info.predictors[b]);
            y[a] = Z(i, j);
          }
          Rng rng_reg = chain_rng.child(kStageRegression, iter, pack_jw(j, w));
          comp_draw[w] = checked_blr(y, X, j, rng_reg);
        }
        Rng rng_imp = chain_rng.child(kStageImpute, iter, j);
        for (int i : info.mis_rows) {
          const int w = labels[i];
          double mean, sigma;
          if (comp_uses_pooled[w]) {
            // Pooled design: component indicator block then predictors.
            mean = pooled.beta[w];
            for (int b = 0; b < npred; ++b)
              mean += pooled.beta[k + b] * Z(i, info.predictors[b]);
            sigma = pooled.sigma;
          } else {
            mean = comp_draw[w].beta[0];
            for (int b = 0; b < npred; ++b)
              mean += comp_draw[w].beta[1 + b] * Z(i, info.predictors[b]);
            sigma = comp_draw[w].sigma;
          }
          Z(i, j) = mean + sigma * rng_imp.normal();
        }
      } else {
        const RegressionDraw d =
            mode == FcsMode::with_classes_pooled
                ? pooled_draw(Z, labels, info, j,
                              chain_rng.child(kStageRegression, iter,
                                              pack_jw(j, k)))
                : intercept_draw(Z, info, j,
                                 chain_rng.child(kStageRegression, iter,
                                                 pack_jw(j, 0)));
        const int npred_used = static_cast<int>(info.predictors.size());
        Rng rng_imp = chain_rng.child(kStageImpute, iter, j);
        for (int i : info.mis_rows) {
          double mean;
          if (mode == FcsMode::with_classes_pooled) {
            mean = d.beta[labels[i]];
            for (int b = 0; b < npred_used; ++b)
              mean += d.beta[k + b] * Z(i, info.predictors[b]);
          } else {
            mean = d.beta[0];
            for (int b = 0; b < npred_used; ++b)
              mean += d.beta[1 + b] * Z(i, info.predictors[b]);
          }
          Z(i, j) = mean + d.sigma * rng_imp.normal();
        }
      }
    }
  }

  // Design: one indicator column per component followed by the predictors.
  RegressionDraw pooled_draw(const Eigen::MatrixXd& Z,
                             const std::vector<int>& labels,
                             const ColumnInfo& info, int j, Rng rng) const {
    const int npred = static_cast<int>(info.predictors.size());
    const int nobs = static_cast<int>(info.obs_rows.size());
    const int q = k + npred;
    if (nobs <= q)
      throw ChainFailure("fcs: column " + std::to_string(j) +
                         " has too few observed rows for its regression");
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(nobs, q);
    Eigen::VectorXd y(nobs);
    for (int a = 0; a < nobs; ++a) {
      const int i = info.obs_rows[a];
      X(a, labels[i]) = 1.0;
      for (int b = 0; b < npred; ++b)
        X(a, k + b) = Z(i, info.predictors[b]);
      y[a] = Z(i, j);
    }
    return checked_blr(y, X, j, rng);
  }

  // Design: intercept followed by the predictors (class-free and k = 1).
  RegressionDraw intercept_draw(const Eigen::MatrixXd& Z,
                                const ColumnInfo& info, int j, Rng rng) const {
    const int npred = static_cast<int>(info.predictors.size());
    const int nobs = static_cast<int>(info.obs_rows.size());
    const int q = 1 + npred;
    if (nobs <= q)
      throw ChainFailure("fcs: column " + std::to_string(j) +
                         " has too few observed rows for its regression");
    Eigen::MatrixXd X(nobs, q);
    Eigen::VectorXd y(nobs);
    for (int a = 0; a < nobs; ++a) {
      const int i = info.obs_rows[a];
      X(a, 0) = 1.0;
      for (int b = 0; b < npred; ++b)
        X(a, 1 + b) = Z(i, info.predictors[b]);
      y[a] = Z(i, j);
    }
    return checked_blr(y, X, j, rng);
  }

  RegressionDraw checked_blr(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                             int j, Rng& rng) const {
    try {
      return draw_blr(y, X, rng);
    } catch (const NumericError& e) {
      throw ChainFailure("fcs: regression for column " + std::to_string(j) +
                         " failed: " + e.what());
    }
  }

  // Bootstrap mixture refresh, share draw, and label redraw.
  void refresh_classes(const Eigen::MatrixXd& Z, std::vector<int>& labels,
                       MixtureModel& fit, const Rng& chain_rng,
                       int iter) const {
    Rng rng_boot = chain_rng.child(kStageBootstrap, iter);
    MixtureModel star;
    bool fitted = false;
    std::string last_failure;
    for (int attempt = 0; attempt < 5 && !fitted; ++attempt) {
      Eigen::MatrixXd Zb(n(), p());
      for (Eigen::Index i = 0; i < n(); ++i)
        Zb.row(i) = Z.row(rng_boot.uniform_index(n()));
      try {
        EmOptions opts;
        opts.warm_start = &fit;
        Rng rng_fit = chain_rng.child(kStageFitLabels, iter);
        star = em_fit(Zb, k, cov_model(), rng_fit, opts);
        fitted = true;
      } catch (const Error& e) {
        last_failure = e.what();
      }
    }
    if (!fitted)
      throw ChainFailure(
          "fcs: bootstrap mixture refresh failed repeatedly: " + last_failure);

    Eigen::MatrixXd logdens;
    Rng rng_wstar = chain_rng.child(kStageFitLabels, iter, 1);
    const std::vector<int> star_labels =
        draw_labels(Z, star, star.weights, rng_wstar, &logdens);

    std::vector<int> counts(k, 0);
    for (int w : star_labels) counts[w]++;
    Eigen::VectorXd dir_alpha(k);
    for (int w = 0; w < k; ++w) {
      const double a = std::max(static_cast<double>(counts[w]), 0.5) /
                       static_cast<double>(n());
      dir_alpha[w] = a + static_cast<double>(counts[w]);
    }
    Rng rng_theta = chain_rng.child(kStageTheta, iter);
    const Eigen::VectorXd theta = draw_dirichlet(dir_alpha, rng_theta);

    Rng rng_wl = chain_rng.child(kStageLabels, iter);
    labels = draw_labels(Z, star, theta, rng_wl, &logdens);
    fit = star;

    if (records) {
      ChainRecord rec;
      rec.chain = chain_index;
      rec.iteration = iter;
      rec.theta = theta;
      rec.means.resize(k, p());
      for (int w = 0; w < k; ++w) rec.means.row(w) = star.means[w].transpose();
      double tr = 0.0;
      for (size_t c = 0; c < star.covs.size(); ++c) tr += star.covs[c].trace();
      rec.cov_trace = tr / static_cast<double>(star.covs.size());
      records->push_back(std::move(rec));
    }
  }
};

ImputationResult run_fcs(const Dataset& ds, FcsMode mode, int k,
                         const FcsSpec& spec, Rng& rng) {
  validate_dataset(ds, "fcs");
  if (k < 1) throw InvalidArgument("fcs: k must be at least 1");
  if (spec.m < 1 || spec.iterations < 1)
    throw InvalidArgument("fcs: invalid chain schedule");
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.mask.row(i).any())
      throw InvalidArgument("fcs: row " + std::to_string(i) +
                            " has no observed cells");
  }
  const PredictorMatrix pred =
      spec.predictors.p() > 0
          ? spec.predictors
          : PredictorMatrix::all_predictors(static_cast<int>(ds.p()));
  validate_predictor_matrix(pred, ds);

  ImputationResult result;
  result.completed.reserve(spec.m);
  for (int c = 0; c < spec.m; ++c) {
    ChainEngine engine{ds,   mode, k, spec.iterations, pred, c,
                       &result.diagnostics};
    result.completed.push_back(engine.run(rng.child(kStageChain, c)));
  }
  return result;
}

}  // namespace

RegressionDraw draw_blr(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                        Rng& rng) {
  const Eigen::Index nrows = X.rows();
  const Eigen::Index q = X.cols();
  if (y.size() != nrows)
    throw InvalidArgument("draw_blr: y length differs from rows of X");
  if (q < 1) throw InvalidArgument("draw_blr: design has no columns");
  if (nrows <= q)
    throw InvalidArgument("draw_blr: needs more rows than design columns");

  Eigen::MatrixXd G = X.transpose() * X;
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-4 * G.trace() / static_cast<double>(q);
    G.diagonal().array() += ridge;
    llt.compute(G);
    if (llt.info() != Eigen::Success)
      throw NumericError("draw_blr: design cross-product is singular");
  }
  const Eigen::VectorXd beta_hat = llt.solve(X.transpose() * y);
  const double rss = (y - X * beta_hat).squaredNorm();
  const double dfree = static_cast<double>(nrows - q);
  const double df_draw = std::max(rng.chi_squared(dfree), 1e-12);
  RegressionDraw d;
  d.sigma = std::sqrt(rss / df_draw);
  Eigen::VectorXd z(q);
  for (Eigen::Index a = 0; a < q; ++a) z[a] = rng.normal();
  // beta_hat + sigma * L^{-T} z has covariance sigma^2 (X^T X)^{-1}.
  const Eigen::VectorXd shift =
      llt.matrixL().transpose().solve(z);
  d.beta = beta_hat + d.sigma * shift;
  return d;
}

ImputationResult fcs_homo_impute(const Dataset& ds, int k, const FcsSpec& spec,
                                 Rng& rng) {
  return run_fcs(ds, FcsMode::with_classes_pooled, k, spec, rng);
}

ImputationResult fcs_hetero_impute(const Dataset& ds, int k,
                                   const FcsSpec& spec, Rng& rng) {
  return run_fcs(ds, FcsMode::with_classes_percluster, k, spec, rng);
}

ImputationResult fcs_norm_impute(const Dataset& ds, const FcsSpec& spec,
                                 Rng& rng) {
  return run_fcs(ds, FcsMode::class_free, 1, spec, rng);
}

}  // namespace miclust
