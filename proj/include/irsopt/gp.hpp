#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "irsopt/channel.hpp"

namespace irsopt {

/// A contiguous slice of the feature vector with one shared lengthscale.
/// Periodic blocks measure per-element chordal distance 2 sin(d/2), i.e.
/// the squared exponential acts on the unit-circle embedding of the angle
/// (the geodesic variant is not positive definite at large lengthscales).
struct FeatureBlock {
  int offset = 0;
  int length = 0;
  bool periodic = false;
};

struct GpHyper {
  double signal_var = 1.0;
  double noise_var = 1e-6;
  VecR lengthscales;  // one per block
};

/// Product of squared-exponential factors, one per feature block:
/// k(x,y) = signal_var * exp(-1/2 sum_b dist_b(x,y)^2 / ls_b^2).
struct BlockKernel {
  std::vector<FeatureBlock> blocks;

  double block_sqdist(const VecR& a, const VecR& b, int which) const {
    const auto& blk = blocks[which];
    double acc = 0.0;
    for (int i = blk.offset; i < blk.offset + blk.length; ++i) {
      double d = a(i) - b(i);
      if (blk.periodic) d = 2.0 * std::sin(0.5 * d);
      acc += d * d;
    }
    return acc;
  }

  double operator()(const VecR& a, const VecR& b, const GpHyper& h) const {
    double q = 0.0;
    for (size_t i = 0; i < blocks.size(); ++i) {
      const double ls = h.lengthscales(static_cast<Eigen::Index>(i));
      q += block_sqdist(a, b, static_cast<int>(i)) / (ls * ls);
    }
    return h.signal_var * std::exp(-0.5 * q);
  }

  static BlockKernel dense(int dim) {
    BlockKernel k;
    k.blocks.push_back({0, dim, false});
    return k;
  }
};

struct GpModel {
  BlockKernel kernel;
  GpHyper hyper;
  std::vector<VecR> inputs;
  VecR alpha;              // (K + noise I)^{-1} y, standardized scale
  Eigen::MatrixXd chol;    // lower Cholesky factor of K + noise I + jitter
  double y_mean = 0.0;
  double y_scale = 1.0;
  double log_marginal = 0.0;

  struct Prediction {
    double mean = 0.0;
    double var = 0.0;
  };

  Prediction predict(const VecR& x) const {
    const int n = static_cast<int>(inputs.size());
    VecR kvec(n);
    for (int i = 0; i < n; ++i) kvec(i) = kernel(x, inputs[i], hyper);
    Prediction out;
    out.mean = y_mean + y_scale * kvec.dot(alpha);
    const VecR solved = chol.triangularView<Eigen::Lower>().solve(kvec);
    double var = kernel(x, x, hyper) - solved.squaredNorm();
    if (var < 0.0) var = 0.0;  // roundoff clamp
    out.var = var * y_scale * y_scale;
    return out;
  }
};

namespace detail {

/// Cholesky with an escalating jitter ladder; throws when 1e-4 still fails.
inline Eigen::MatrixXd robust_cholesky(Eigen::MatrixXd gram) {
  const int n = static_cast<int>(gram.rows());
  double jitter = 0.0;
  for (int attempt = 0; attempt < 7; ++attempt) {
    Eigen::MatrixXd shifted = gram;
    if (jitter > 0.0)
      shifted += jitter * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter = jitter == 0.0 ? 1e-8 : jitter * 10.0;
    if (jitter > 1e-4 + 1e-12)
      throw std::runtime_error("gp: kernel matrix not positive definite");
  }
  throw std::runtime_error("gp: kernel matrix not positive definite");
}

inline Eigen::MatrixXd gram_matrix(const std::vector<VecR>& inputs,
                                   const BlockKernel& kernel,
                                   const GpHyper& hyper) {
  const int n = static_cast<int>(inputs.size());
  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      gram(i, j) = kernel(inputs[i], inputs[j], hyper);
      gram(j, i) = gram(i, j);
    }
  }
  return gram;
}

}  // namespace detail

/// Conditions a GP with fixed hyperparameters on raw (unstandardized)
/// targets. Used directly by tests and internally by gp_fit.
inline GpModel gp_make(std::vector<VecR> inputs, VecR targets,
                       BlockKernel kernel, GpHyper hyper, double y_mean = 0.0,
                       double y_scale = 1.0) {
  if (inputs.size() < 1 || static_cast<Eigen::Index>(inputs.size()) != targets.size())
    throw std::invalid_argument("gp_make: inputs/targets size mismatch");
  GpModel m;
  m.kernel = std::move(kernel);
  m.hyper = std::move(hyper);
  m.inputs = std::move(inputs);
  m.y_mean = y_mean;
  m.y_scale = y_scale;
  const int n = static_cast<int>(m.inputs.size());
  Eigen::MatrixXd gram = detail::gram_matrix(m.inputs, m.kernel, m.hyper);
  gram += m.hyper.noise_var * Eigen::MatrixXd::Identity(n, n);
  m.chol = detail::robust_cholesky(std::move(gram));
  VecR standardized = (targets.array() - y_mean) / y_scale;
  m.alpha = m.chol.triangularView<Eigen::Lower>().solve(standardized);
  double quad = m.alpha.squaredNorm();
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(m.chol(i, i));
  m.alpha =
      m.chol.transpose().triangularView<Eigen::Upper>().solve(m.alpha);
  m.log_marginal =
      -0.5 * quad - logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
  return m;
}

/// Hyperparameter selection by marginal likelihood over a deterministic
/// grid: per-block lengthscale candidates around the median pairwise
/// distance (five starts), then coordinate refinement, with the noise level
/// scanned on a fixed log grid. Targets are standardized internally.
inline GpModel gp_fit(const std::vector<VecR>& inputs, const VecR& targets,
                      const BlockKernel& kernel,
                      double noise_floor = 1e-6) {
  const int n = static_cast<int>(inputs.size());
  if (n < 2) throw std::invalid_argument("gp_fit: need at least two points");
  const double mean = targets.mean();
  double var = (targets.array() - mean).square().sum() / n;
  const double scale = std::sqrt(std::max(var, 1e-24));

  const int nblocks = static_cast<int>(kernel.blocks.size());
  VecR median(nblocks);
  for (int b = 0; b < nblocks; ++b) {
    std::vector<double> dists;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double d2 = kernel.block_sqdist(inputs[i], inputs[j], b);
        if (d2 > 0.0) dists.push_back(std::sqrt(d2));
      }
    if (dists.empty()) {
      median(b) = 1.0;
    } else {
      std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                       dists.end());
      median(b) = dists[dists.size() / 2];
    }
  }

  const double noise_grid[] = {1e-6, 1e-4, 1e-2, 1e-1};
  const double start_grid[] = {0.25, 0.5, 1.0, 2.0, 4.0};

  GpHyper best;
  double best_lml = -std::numeric_limits<double>::infinity();
  auto score = [&](const GpHyper& h) {
    GpModel m = gp_make(inputs, targets, kernel, h, mean, scale);
    return m.log_marginal;
  };

  for (double mult : start_grid) {
    GpHyper h;
    h.signal_var = 1.0;
    h.noise_var = std::max(noise_floor, 1e-4);
    h.lengthscales = median * mult;
    const double lml = score(h);
    if (lml > best_lml) {
      best_lml = lml;
      best = h;
    }
  }
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (int b = 0; b < nblocks; ++b) {
      for (double mult : {0.5, 2.0}) {
        GpHyper h = best;
        h.lengthscales(b) *= mult;
        const double lml = score(h);
        if (lml > best_lml) {
          best_lml = lml;
          best = h;
        }
      }
    }
    for (double nv : noise_grid) {
      if (nv < noise_floor) continue;
      GpHyper h = best;
      h.noise_var = nv;
      const double lml = score(h);
      if (lml > best_lml) {
        best_lml = lml;
        best = h;
      }
    }
  }
  return gp_make(inputs, targets, kernel, best, mean, scale);
}

/// Capacity-style diagnostic 0.5 log det(I + K / noise_var) for the model's
/// training set.
inline double gp_info_gain(const GpModel& m) {
  const int n = static_cast<int>(m.inputs.size());
  Eigen::MatrixXd gram = detail::gram_matrix(m.inputs, m.kernel, m.hyper);
  const double nv = std::max(m.hyper.noise_var, 1e-12);
  Eigen::MatrixXd shifted =
      Eigen::MatrixXd::Identity(n, n) + gram / nv;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  return logdet;  // 0.5 * logdet(shifted) = sum of log diag of L
}

}  // namespace irsopt
