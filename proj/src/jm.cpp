#include "jm.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gmm.hpp"

namespace miclust {

namespace {

// Substream purposes within one chain.
enum : std::uint64_t {
  kStageInitEm = 1,
  kStageLabels = 2,
  kStageCells = 3,
  kStageTheta = 4,
  kStageSigma = 5,
  kStageMu = 6,
};

// Per missingness-pattern factorizations for one covariance draw. The
// covariance is shared across components, so everything except the mean
// terms can be reused by every row with the same pattern.
struct Pattern {
  std::vector<int> obs, mis;
  Eigen::LLT<Eigen::MatrixXd> llt_oo;
  Eigen::MatrixXd reg;        // Sigma_mo * Sigma_oo^{-1}
  Eigen::MatrixXd cond_chol;  // lower factor of the conditional covariance
  // Per-component discriminant pieces on the observed block.
  Eigen::MatrixXd mu_obs;   // k x |obs|
  Eigen::MatrixXd mu_half;  // L^{-1} mu_obs^T, |obs| x k
};

}  // namespace

ImputationResult jm_gl_impute(const Dataset& ds, int k, const ChainSpec& spec,
                              Rng& rng) {
  validate_dataset(ds, "jm_gl_impute");
  const Eigen::Index n = ds.n();
  const Eigen::Index p = ds.p();
  if (k < 1) throw InvalidArgument("jm_gl_impute: k must be at least 1");
  if (spec.m < 1 || spec.burn_in < 0 || spec.thin < 1)
    throw InvalidArgument("jm_gl_impute: invalid chain schedule");
  if (n <= p + k)
    throw InvalidArgument("jm_gl_impute: needs more rows than p + k");
  for (Eigen::Index i = 0; i < n; ++i) {
    bool any = false;
    for (Eigen::Index j = 0; j < p; ++j) any = any || ds.mask(i, j);
    if (!any)
      throw InvalidArgument("jm_gl_impute: row " + std::to_string(i) +
                            " has no observed cells");
  }
  if (!(static_cast<double>(n - p) > static_cast<double>(p) - 1.0))
    throw ChainFailure(
        "jm_gl_impute: too few rows for the covariance posterior (need n - p "
        "> p - 1)");

  // Start from a mixture fit on the mean-completed data.
  Eigen::MatrixXd Z = ds.values;
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Eigen::Index cnt = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (ds.mask(i, j)) { sum += Z(i, j); ++cnt; }
    if (cnt == 0)
      throw InvalidArgument("jm_gl_impute: column " + std::to_string(j) +
                            " is entirely missing");
    const double mean = sum / static_cast<double>(cnt);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!ds.mask(i, j)) Z(i, j) = mean;
  }

  MixtureModel model;
  try {
    Rng init_rng = rng.child(kStageInitEm);
    model = em_fit(Z, k, CovModel::shared, init_rng);
  } catch (const DegenerateFit& e) {
    throw ChainFailure(std::string("jm_gl_impute: initial fit failed: ") +
                       e.what());
  }
  const Partition init_labels = classify(model, Z);
  const std::vector<int> init_counts = partition_counts(init_labels);
  Eigen::VectorXd alpha(k);
  for (int w = 0; w < k; ++w)
    alpha[w] = std::max(static_cast<double>(init_counts[w]), 0.5) /
               static_cast<double>(n);

  Eigen::VectorXd theta = model.weights;
  std::vector<Eigen::VectorXd> mu = model.means;
  Eigen::MatrixXd Sigma = model.covs[0];
  std::vector<int> labels(n, 0);

  ImputationResult result;
  result.completed.reserve(spec.m);
  const int total = spec.burn_in + spec.thin * spec.m;

  for (int iter = 1; iter <= total; ++iter) {
    Rng rng_labels = rng.child(kStageLabels, iter);
    Rng rng_cells = rng.child(kStageCells, iter);

    // Factor the current covariance once per missingness pattern.
    std::map<std::vector<bool>, Pattern> patterns;
    Eigen::VectorXd log_theta(k);
    for (int w = 0; w < k; ++w) log_theta[w] = std::log(theta[w]);
    std::vector<bool> key(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) key[j] = ds.mask(i, j);
      auto it = patterns.find(key);
      if (it == patterns.end()) {
        Pattern pat;
        for (int j = 0; j < p; ++j)
          (key[j] ? pat.obs : pat.mis).push_back(j);
        const int no = static_cast<int>(pat.obs.size());
        const int nm = static_cast<int>(pat.mis.size());
        Eigen::MatrixXd Soo(no, no), Smo(nm, no), Smm(nm, nm);
        for (int a = 0; a < no; ++a)
          for (int b = 0; b < no; ++b) Soo(a, b) = Sigma(pat.obs[a], pat.obs[b]);
        for (int a = 0; a < nm; ++a) {
          for (int b = 0; b < no; ++b) Smo(a, b) = Sigma(pat.mis[a], pat.obs[b]);
          for (int b = 0; b < nm; ++b) Smm(a, b) = Sigma(pat.mis[a], pat.mis[b]);
        }
        pat.llt_oo.compute(Soo);
        if (pat.llt_oo.info() != Eigen::Success) {
          ensure_spd(Soo);
          pat.llt_oo.compute(Soo);
          if (pat.llt_oo.info() != Eigen::Success)
            throw ChainFailure(
                "jm_gl_impute: observed-block covariance became singular");
        }
        pat.mu_obs.resize(k, no);
        for (int w = 0; w < k; ++w)
          for (int a = 0; a < no; ++a) pat.mu_obs(w, a) = mu[w][pat.obs[a]];
        pat.mu_half = pat.llt_oo.matrixL().solve(
            Eigen::MatrixXd(pat.mu_obs.transpose()));
        if (nm > 0) {
          pat.reg = pat.llt_oo.solve(Smo.transpose()).transpose();
          Eigen::MatrixXd cond = Smm - pat.reg * Smo.transpose();
          ensure_spd(cond);
          pat.cond_chol =
              Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(cond).matrixL());
        }
        it = patterns.emplace(key, std::move(pat)).first;
      }
      const Pattern& pat = it->second;
      const int no = static_cast<int>(pat.obs.size());
      const int nm = static_cast<int>(pat.mis.size());

      // Component posterior restricted to observed coordinates.
      Eigen::VectorXd zo(no);
      for (int a = 0; a < no; ++a) zo[a] = Z(i, pat.obs[a]);
      Eigen::VectorXd zo_half = pat.llt_oo.matrixL().solve(zo);
      Eigen::VectorXd scores(k);
      for (int w = 0; w < k; ++w)
        scores[w] =
            log_theta[w] - 0.5 * (zo_half - pat.mu_half.col(w)).squaredNorm();
      const double mx = scores.maxCoeff();
      Eigen::VectorXd probs = (scores.array() - mx).exp();
      probs /= probs.sum();
      const int w = draw_categorical(probs, rng_labels);
      labels[i] = w;

      if (nm > 0) {
        Eigen::VectorXd diff(no);
        for (int a = 0; a < no; ++a) diff[a] = zo[a] - pat.mu_obs(w, a);
        Eigen::VectorXd mean(nm);
        for (int a = 0; a < nm; ++a) mean[a] = mu[w][pat.mis[a]];
        mean += pat.reg * diff;
        Eigen::VectorXd noise(nm);
        for (int a = 0; a < nm; ++a) noise[a] = rng_cells.normal();
        const Eigen::VectorXd draw = mean + pat.cond_chol * noise;
        for (int a = 0; a < nm; ++a) Z(i, pat.mis[a]) = draw[a];
      }
    }

    // Posterior step: shares, covariance, means.
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) counts[labels[i]]++;
    Eigen::VectorXd dir_alpha(k);
    for (int w = 0; w < k; ++w)
      dir_alpha[w] = alpha[w] + static_cast<double>(counts[w]);
    Rng rng_theta = rng.child(kStageTheta, iter);
    theta = draw_dirichlet(dir_alpha, rng_theta);

    std::vector<Eigen::VectorXd> mu_hat(k, Eigen::VectorXd::Zero(p));
    for (Eigen::Index i = 0; i < n; ++i) mu_hat[labels[i]] += Z.row(i);
    for (int w = 0; w < k; ++w)
      if (counts[w] > 0) mu_hat[w] /= static_cast<double>(counts[w]);
    Eigen::MatrixXd resid(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      resid.row(i) = Z.row(i) - mu_hat[labels[i]].transpose();
    const Eigen::MatrixXd S = resid.transpose() * resid;
    Rng rng_sigma = rng.child(kStageSigma, iter);
    try {
      Sigma = draw_inverse_wishart(static_cast<double>(n - p), S, rng_sigma);
    } catch (const NumericError& e) {
      throw ChainFailure(
          std::string("jm_gl_impute: residual cross-product singular: ") +
          e.what());
    }
    Rng rng_mu = rng.child(kStageMu, iter);
    for (int w = 0; w < k; ++w) {
      if (counts[w] == 0) continue;  // keep the previous mean draw
      mu[w] = draw_mvnormal(mu_hat[w],
                            Sigma / static_cast<double>(counts[w]), rng_mu);
    }

    ChainRecord rec;
    rec.chain = 0;
    rec.iteration = iter;
    rec.theta = theta;
    rec.means.resize(k, p);
    for (int w = 0; w < k; ++w) rec.means.row(w) = mu[w].transpose();
    rec.cov_trace = Sigma.trace();
    result.diagnostics.push_back(std::move(rec));

    if (iter > spec.burn_in && (iter - spec.burn_in) % spec.thin == 0)
      result.completed.push_back(Z);
  }
  return result;
}

ImputationResult jm_norm_impute(const Dataset& ds, const ChainSpec& spec,
                                Rng& rng) {
  return jm_gl_impute(ds, 1, spec, rng);
}

}  // namespace miclust
