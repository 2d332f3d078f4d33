#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "gmm.hpp"
#include "rng.hpp"

using namespace miclust;

namespace {

// Two separated spherical components, rows stacked by component.
Eigen::MatrixXd two_blobs(int n_per, double shift, Rng& rng) {
  Eigen::MatrixXd data(2 * n_per, 2);
  for (int i = 0; i < n_per; ++i)
    for (int j = 0; j < 2; ++j) {
      data(i, j) = rng.normal();
      data(n_per + i, j) = shift + rng.normal();
    }
  return data;
}

double direct_loglik(const MixtureModel& model, const Eigen::MatrixXd& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    double density = 0.0;
    for (int w = 0; w < model.k(); ++w) {
      const Eigen::MatrixXd& cov = model.cov(w);
      const Eigen::VectorXd diff = data.row(i).transpose() - model.means[w];
      const Eigen::LLT<Eigen::MatrixXd> llt(cov);
      const double quad = llt.matrixL().solve(diff).squaredNorm();
      double logdet = 0.0;
      for (Eigen::Index j = 0; j < cov.rows(); ++j)
        logdet += 2.0 * std::log(llt.matrixL()(j, j));
      const double logdens = -0.5 * (static_cast<double>(cov.rows()) *
                                         std::log(2.0 * M_PI) +
                                     logdet + quad);
      density += model.weights[w] * std::exp(logdens);
    }
    total += std::log(density);
  }
  return total;
}

}  // namespace

TEST_CASE("em_fit recovers two well separated components") {
  Rng rng(7);
  const Eigen::MatrixXd data = two_blobs(150, 8.0, rng);
  Rng fit_rng = rng.child(1);
  const MixtureModel model = em_fit(data, 2, CovModel::shared, fit_rng);
  REQUIRE(model.k() == 2);
  // One mean near (0,0), the other near (8,8).
  const double n0 = std::min(model.means[0].norm(), model.means[1].norm());
  const double n1 = std::max(model.means[0].norm(), model.means[1].norm());
  CHECK(n0 < 1.0);
  CHECK(std::abs(n1 - std::sqrt(2.0) * 8.0) < 1.0);
  CHECK(std::abs(model.weights.sum() - 1.0) < 1e-12);
  CHECK(model.weights.minCoeff() > 0.3);
}

TEST_CASE("log-likelihood never decreases along the EM trajectory") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 60;
    Eigen::MatrixXd data(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j)
        data(i, j) = rng.normal() + (i % 2 == 0 ? 0.0 : 2.0);
    std::vector<double> trace;
    EmOptions opts;
    opts.restarts = 2;
    opts.loglik_trace = &trace;
    Rng fit_rng = rng.child(100 + static_cast<std::uint64_t>(rep));
    em_fit(data, 2, rep % 2 == 0 ? CovModel::shared : CovModel::per_cluster,
           fit_rng, opts);
    REQUIRE(trace.size() >= 2);
    for (std::size_t t = 1; t < trace.size(); ++t)
      CHECK(trace[t] >= trace[t - 1] - 1e-8);
  }
}

TEST_CASE("single-component fit equals the closed-form moments and uses no randomness") {
  Rng rng(3);
  Eigen::MatrixXd data(40, 2);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 2; ++j) data(i, j) = rng.normal() * (j + 1.0);

  Rng a(999), b(999);
  const MixtureModel model = em_fit(data, 1, CovModel::shared, a);
  // The fit consumed nothing from the stream.
  CHECK(a.next_u64() == b.next_u64());

  const Eigen::VectorXd mean = data.colwise().mean();
  CHECK((model.means[0] - mean).norm() < 1e-12);
  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(data.rows());
  CHECK((model.covs[0] - cov).norm() < 1e-12);
  CHECK(model.weights[0] == 1.0);
}

TEST_CASE("per-cluster covariances are recovered when they differ") {
  Rng rng(19);
  const int n_per = 400;
  Eigen::MatrixXd data(2 * n_per, 2);
  for (int i = 0; i < n_per; ++i) {
    data(i, 0) = 0.5 * rng.normal();
    data(i, 1) = 0.5 * rng.normal();
    data(n_per + i, 0) = 10.0 + 2.0 * rng.normal();
    data(n_per + i, 1) = 10.0 + 2.0 * rng.normal();
  }
  Rng fit_rng = rng.child(1);
  const MixtureModel model =
      em_fit(data, 2, CovModel::per_cluster, fit_rng);
  const int tight = model.covs[0].trace() < model.covs[1].trace() ? 0 : 1;
  CHECK(model.covs[tight].trace() == doctest::Approx(2 * 0.25).epsilon(0.25));
  CHECK(model.covs[1 - tight].trace() == doctest::Approx(2 * 4.0).epsilon(0.25));
}

TEST_CASE("degenerate inputs are rejected") {
  Rng rng(5);
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(10, 2);
  CHECK_THROWS_AS(em_fit(data, 2, CovModel::shared, rng), DegenerateFit);

  Eigen::MatrixXd tiny(2, 2);
  tiny << 1, 2, 3, 4;
  CHECK_THROWS_AS(em_fit(tiny, 2, CovModel::shared, rng), DegenerateFit);
  CHECK_THROWS_AS(em_fit(tiny, 0, CovModel::shared, rng), DegenerateFit);
}

TEST_CASE("classify assigns by posterior with ties to the lowest index") {
  MixtureModel model;
  model.cov_model = CovModel::shared;
  model.weights = Eigen::VectorXd::Constant(2, 0.5);
  model.means = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 4.0)};
  model.covs = {Eigen::MatrixXd::Identity(1, 1)};
  Eigen::MatrixXd data(3, 1);
  data << 0.5, 3.5, 2.0;  // midpoint 2.0 is an exact tie
  const Partition part = classify(model, data);
  CHECK(part.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("mixture_loglik matches a direct density computation") {
  Rng rng(23);
  Eigen::MatrixXd data(25, 2);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 2; ++j) data(i, j) = rng.normal();
  MixtureModel model;
  model.cov_model = CovModel::per_cluster;
  model.weights = Eigen::VectorXd(2);
  model.weights << 0.3, 0.7;
  model.means = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 1.0)};
  Eigen::MatrixXd c0(2, 2), c1(2, 2);
  c0 << 1.0, 0.2, 0.2, 1.0;
  c1 << 2.0, -0.3, -0.3, 0.5;
  model.covs = {c0, c1};
  CHECK(mixture_loglik(model, data) ==
        doctest::Approx(direct_loglik(model, data)).epsilon(1e-10));
}

TEST_CASE("discriminant scores respect the observed pattern") {
  MixtureModel model;
  model.cov_model = CovModel::shared;
  model.weights = Eigen::VectorXd(2);
  model.weights << 0.4, 0.6;
  model.means = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 3.0)};
  model.covs = {Eigen::MatrixXd::Identity(2, 2)};

  Eigen::VectorXd row(2);
  row << 3.0, 100.0;  // second coordinate is missing, must be ignored
  const Eigen::VectorXd scores =
      discriminant_scores(model, row, {true, false});
  CHECK(std::abs(scores.sum() - 1.0) < 1e-12);
  // Observing only x1 = 3 favors the second component.
  CHECK(scores[1] > scores[0]);

  // Manual posterior from the one observed coordinate.
  const double d0 = 0.4 * std::exp(-0.5 * 9.0);
  const double d1 = 0.6 * std::exp(-0.5 * 0.0);
  CHECK(scores[1] == doctest::Approx(d1 / (d0 + d1)).epsilon(1e-10));

  const Eigen::VectorXd none =
      discriminant_scores(model, row, {false, false});
  CHECK(none[0] == doctest::Approx(0.4));
  CHECK(none[1] == doctest::Approx(0.6));
}

TEST_CASE("conditional draws of missing coordinates track the regression mean") {
  // x2 | x1 ~ N(0.8 * x1, 1 - 0.64) under a unit-variance correlated pair.
  MixtureModel model;
  model.cov_model = CovModel::shared;
  model.weights = Eigen::VectorXd::Constant(1, 1.0);
  model.means = {Eigen::VectorXd::Zero(2)};
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.8, 0.8, 1.0;
  model.covs = {cov};

  Rng rng(31);
  const int reps = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < reps; ++i) {
    Eigen::VectorXd row(2);
    row << 2.0, std::nan("");
    const Eigen::VectorXd filled =
        draw_conditional_missing(model, row, {true, false}, 0, rng);
    CHECK(filled[0] == 2.0);
    sum += filled[1];
    sum_sq += filled[1] * filled[1];
  }
  const double mean = sum / reps;
  const double var = sum_sq / reps - mean * mean;
  CHECK(mean == doctest::Approx(1.6).epsilon(0.02));
  CHECK(var == doctest::Approx(0.36).epsilon(0.08));
}

TEST_CASE("fully observed rows pass through conditional drawing unchanged") {
  MixtureModel model;
  model.cov_model = CovModel::shared;
  model.weights = Eigen::VectorXd::Constant(1, 1.0);
  model.means = {Eigen::VectorXd::Zero(2)};
  model.covs = {Eigen::MatrixXd::Identity(2, 2)};
  Rng rng(1);
  Eigen::VectorXd row(2);
  row << 1.5, -2.5;
  const Eigen::VectorXd out =
      draw_conditional_missing(model, row, {true, true}, 0, rng);
  CHECK(out == row);
}

TEST_CASE("ensure_spd repairs roundoff-scale indefiniteness in place") {
  Eigen::MatrixXd m(2, 2);
  const double off = 1.0 + 1e-7;
  m << 1.0, off, off, 1.0;  // smallest eigenvalue -1e-7
  ensure_spd(m);
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  CHECK(llt.info() == Eigen::Success);
  CHECK(std::abs(m(0, 1) - off) < 1e-3);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalue -1, far beyond jitter repair
  CHECK_THROWS_AS(ensure_spd(bad), NumericError);
}

TEST_CASE("k-means++ seeding returns distinct in-range rows") {
  Rng rng(41);
  Eigen::MatrixXd data(30, 2);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 2; ++j) data(i, j) = rng.normal();
  const std::vector<int> seeds = kmeanspp_rows(data, 5, rng);
  REQUIRE(seeds.size() == 5);
  for (std::size_t a = 0; a < seeds.size(); ++a) {
    CHECK(seeds[a] >= 0);
    CHECK(seeds[a] < 30);
    for (std::size_t b = a + 1; b < seeds.size(); ++b)
      CHECK(seeds[a] != seeds[b]);
  }
}

TEST_CASE("empty components are re-seeded rather than collapsing") {
  // k = 3 on data with only two real groups still yields three nonempty
  // components after the responsibility-based re-seed.
  Rng rng(53);
  const Eigen::MatrixXd data = two_blobs(60, 12.0, rng);
  Rng fit_rng = rng.child(2);
  const MixtureModel model = em_fit(data, 3, CovModel::shared, fit_rng);
  const Partition part = classify(model, data);
  std::vector<int> counts(3, 0);
  for (int lab : part.labels) ++counts[static_cast<std::size_t>(lab)];
  int nonempty = 0;
  for (int c : counts) nonempty += c > 0 ? 1 : 0;
  CHECK(nonempty >= 2);
  CHECK(std::abs(model.weights.sum() - 1.0) < 1e-12);
}
