#include "impute.hpp"

#include <cstdio>
#include <fstream>

#include "errors.hpp"
#include "fcs.hpp"
#include "jm.hpp"

namespace miclust {

Engine parse_engine(const std::string& name) {
  if (name == "jm_gl") return Engine::jm_gl;
  if (name == "jm_norm") return Engine::jm_norm;
  if (name == "fcs_homo") return Engine::fcs_homo;
  if (name == "fcs_hetero") return Engine::fcs_hetero;
  if (name == "fcs_norm") return Engine::fcs_norm;
  throw InvalidArgument("unknown imputation engine '" + name + "'");
}

std::string engine_name(Engine e) {
  switch (e) {
    case Engine::jm_gl: return "jm_gl";
    case Engine::jm_norm: return "jm_norm";
    case Engine::fcs_homo: return "fcs_homo";
    case Engine::fcs_hetero: return "fcs_hetero";
    case Engine::fcs_norm: return "fcs_norm";
  }
  throw InvalidArgument("unknown engine value");
}

ChainSpec default_chain_spec(Engine e) {
  ChainSpec spec;
  if (e == Engine::jm_norm) {
    spec.burn_in = 500;
    spec.thin = 100;
  }
  return spec;
}

FcsSpec default_fcs_spec(Engine e) {
  FcsSpec spec;
  if (e == Engine::fcs_norm) spec.iterations = 20;
  return spec;
}

ImputationResult impute(const Dataset& ds, Engine e, int k, int m, Rng& rng,
                        const PredictorMatrix& predictors, int burn_in,
                        int thin, int iterations) {
  switch (e) {
    case Engine::jm_gl:
    case Engine::jm_norm: {
      ChainSpec spec = default_chain_spec(e);
      spec.m = m;
      if (burn_in >= 0) spec.burn_in = burn_in;
      if (thin >= 0) spec.thin = thin;
      if (e == Engine::jm_norm) return jm_norm_impute(ds, spec, rng);
      return jm_gl_impute(ds, k, spec, rng);
    }
    case Engine::fcs_homo:
    case Engine::fcs_hetero:
    case Engine::fcs_norm: {
      FcsSpec spec = default_fcs_spec(e);
      spec.m = m;
      if (iterations >= 0) spec.iterations = iterations;
      spec.predictors = predictors;
      if (e == Engine::fcs_homo) return fcs_homo_impute(ds, k, spec, rng);
      if (e == Engine::fcs_hetero) return fcs_hetero_impute(ds, k, spec, rng);
      return fcs_norm_impute(ds, spec, rng);
    }
  }
  throw InvalidArgument("impute: unknown engine");
}

void save_diagnostics_csv(const ImputationResult& result,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  int k = 0, p = 0;
  for (const auto& rec : result.diagnostics) {
    k = std::max(k, static_cast<int>(rec.means.rows()));
    p = std::max(p, static_cast<int>(rec.means.cols()));
  }
  out << "chain,iteration";
  for (int w = 0; w < k; ++w) out << ",theta_" << w;
  for (int w = 0; w < k; ++w)
    for (int j = 0; j < p; ++j) out << ",mean_" << w << '_' << j;
  out << ",cov_trace\n";
  char buf[40];
  const auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& rec : result.diagnostics) {
    out << rec.chain << ',' << rec.iteration;
    for (int w = 0; w < k; ++w)
      emit(w < rec.theta.size() ? rec.theta[w] : 0.0);
    for (int w = 0; w < k; ++w)
      for (int j = 0; j < p; ++j)
        emit(w < rec.means.rows() && j < rec.means.cols() ? rec.means(w, j)
                                                          : 0.0);
    emit(rec.cov_trace);
    out << '\n';
  }
}

}  // namespace miclust
