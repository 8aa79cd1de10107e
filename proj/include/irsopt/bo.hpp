#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsopt/channel.hpp"
#include "irsopt/gp.hpp"
#include "irsopt/latent.hpp"
#include "irsopt/rng.hpp"

namespace irsopt {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Expected improvement below the incumbent for a minimization posterior.
inline double expected_improvement(double mean, double var, double incumbent) {
  const double sd = std::sqrt(var);
  if (sd <= 0.0) return std::max(incumbent - mean, 0.0);
  const double u = (incumbent - mean) / sd;
  const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return (incumbent - mean) * normal_cdf(u) + sd * pdf;
}

/// Probability that a constraint posterior is nonpositive.
inline double feasibility_probability(const GpModel::Prediction& p) {
  const double sd = std::sqrt(p.var);
  if (sd <= 0.0) return p.mean <= 0.0 ? 1.0 : 0.0;
  return normal_cdf(-p.mean / sd);
}

/// Improvement-times-feasibility score.
inline double acquisition_eic(const GpModel& f_gp, const GpModel& g1_gp,
                              const GpModel& g2_gp, const VecR& feat,
                              double incumbent) {
  const auto p = f_gp.predict(feat);
  const double ei = expected_improvement(p.mean, p.var, incumbent);
  return ei * feasibility_probability(g1_gp.predict(feat)) *
         feasibility_probability(g2_gp.predict(feat));
}

/// Exploration bonus schedule for the confidence-bound acquisition.
inline double ucb_beta(int t) { return 0.4 * std::log(2.0 * t + 2.0); }

/// Lower-confidence-bound score (minimization) behind a hard feasibility
/// gate: candidates whose joint feasibility probability falls below
/// 1 - delta score -inf.
inline double acquisition_cucb(const GpModel& f_gp, const GpModel& g1_gp,
                               const GpModel& g2_gp, const VecR& feat, int t,
                               double delta) {
  const double pf = feasibility_probability(g1_gp.predict(feat)) *
                    feasibility_probability(g2_gp.predict(feat));
  if (pf < 1.0 - delta) return -std::numeric_limits<double>::infinity();
  const auto p = f_gp.predict(feat);
  return -(p.mean - std::sqrt(ucb_beta(t)) * std::sqrt(p.var));
}

enum class Acquisition { eic, cucb };

inline Acquisition acquisition_from_string(const std::string& s) {
  if (s == "eic") return Acquisition::eic;
  if (s == "cucb") return Acquisition::cucb;
  throw std::invalid_argument("unknown acquisition: " + s);
}

/// Latin hypercube sample of n points in [-box, box]^dim.
inline std::vector<VecR> latin_hypercube(int n, int dim, double box, Rng& rng) {
  std::vector<VecR> pts(n, VecR::Zero(dim));
  std::vector<int> perm(n);
  for (int d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    for (int i = 0; i < n; ++i) {
      const double u = (perm[i] + rng.uniform()) / n;
      pts[i](d) = -box + 2.0 * box * u;
    }
  }
  return pts;
}

struct BoConfig {
  int budget = 80;          // total evaluations including the initial batch
  int n_init = 10;
  Acquisition acquisition = Acquisition::eic;
  double box = 3.0;         // latent search box half-width
  double feas_delta = 0.05; // cucb hard-gate level
  int candidates = 1024;
  int refine_steps = 20;
  double noise_floor = 1e-6;
};

struct BoRecord {
  int iter = 0;
  double f = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  bool feasible = false;
  double best_feasible = std::numeric_limits<double>::infinity();
};

struct BoResult {
  VecR best_z;
  double best_f = std::numeric_limits<double>::infinity();
  bool feasible_found = false;
  std::vector<BoRecord> trace;
  double info_gain = 0.0;
};

/// One full constrained Bayesian optimization run over [-box, box]^dim.
/// `objective` returns (f, g1, g2) for a latent point; `featurize` maps the
/// latent point to the kernel's feature space (identity for plain inputs,
/// decode-based for design problems).
inline BoResult run_bo(
    const std::function<std::array<double, 3>(const VecR&, Rng&)>& objective,
    int dim, const BlockKernel& kernel,
    const std::function<VecR(const VecR&)>& featurize, const BoConfig& cfg,
    std::uint64_t seed) {
  if (cfg.budget <= cfg.n_init || cfg.n_init < 2)
    throw std::invalid_argument("run_bo: need budget > n_init >= 2");
  Rng rng(seed);

  std::vector<VecR> zs;
  std::vector<VecR> feats;
  std::vector<double> fs, g1s, g2s;
  BoResult res;

  auto incumbent = [&]() {
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (size_t i = 0; i < fs.size(); ++i)
      if (g1s[i] <= 0.0 && g2s[i] <= 0.0 && fs[i] < best) {
        best = fs[i];
        found = true;
      }
    if (!found)  // fall back to the best objective seen so far
      for (double f : fs) best = std::min(best, f);
    return best;
  };

  auto record = [&](const VecR& z, const std::array<double, 3>& val) {
    zs.push_back(z);
    feats.push_back(featurize(z));
    fs.push_back(val[0]);
    g1s.push_back(val[1]);
    g2s.push_back(val[2]);
    BoRecord rec;
    rec.iter = static_cast<int>(fs.size()) - 1;
    rec.f = val[0];
    rec.g1 = val[1];
    rec.g2 = val[2];
    rec.feasible = val[1] <= 0.0 && val[2] <= 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < fs.size(); ++i)
      if (g1s[i] <= 0.0 && g2s[i] <= 0.0) best = std::min(best, fs[i]);
    rec.best_feasible = best;
    res.trace.push_back(rec);
  };

  for (const VecR& z : latin_hypercube(cfg.n_init, dim, cfg.box, rng))
    record(z, objective(z, rng));

  GpModel f_gp;
  for (int t = cfg.n_init; t < cfg.budget; ++t) {
    Eigen::Map<const VecR> fvec(fs.data(), fs.size());
    Eigen::Map<const VecR> g1vec(g1s.data(), g1s.size());
    Eigen::Map<const VecR> g2vec(g2s.data(), g2s.size());
    f_gp = gp_fit(feats, fvec, kernel, cfg.noise_floor);
    GpModel g1_gp = gp_fit(feats, g1vec, kernel, cfg.noise_floor);
    GpModel g2_gp = gp_fit(feats, g2vec, kernel, cfg.noise_floor);
    const double inc = incumbent();

    auto score = [&](const VecR& z) {
      const VecR feat = featurize(z);
      if (cfg.acquisition == Acquisition::eic)
        return acquisition_eic(f_gp, g1_gp, g2_gp, feat, inc);
      return acquisition_cucb(f_gp, g1_gp, g2_gp, feat, t, cfg.feas_delta);
    };

    VecR best_z = VecR::Zero(dim);
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.candidates; ++i) {
      VecR z(dim);
      for (int d = 0; d < dim; ++d) z(d) = rng.uniform(-cfg.box, cfg.box);
      const double s = score(z);
      if (s > best_score) {
        best_score = s;
        best_z = z;
      }
    }
    double radius = 0.1 * cfg.box;
    for (int i = 0; i < cfg.refine_steps; ++i) {
      VecR z = best_z;
      for (int d = 0; d < dim; ++d)
        z(d) = std::clamp(z(d) + rng.normal(0.0, radius), -cfg.box, cfg.box);
      const double s = score(z);
      if (s > best_score) {
        best_score = s;
        best_z = z;
      }
      radius *= 0.85;
    }
    record(best_z, objective(best_z, rng));
  }

  // final choice: best empirically feasible point, else minimum violation
  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (size_t i = 0; i < fs.size(); ++i)
    if (g1s[i] <= 0.0 && g2s[i] <= 0.0 && fs[i] < best) {
      best = fs[i];
      best_idx = static_cast<int>(i);
    }
  res.feasible_found = best_idx >= 0;
  if (best_idx < 0) {
    double least = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < fs.size(); ++i) {
      const double viol = std::max(g1s[i], 0.0) + std::max(g2s[i], 0.0);
      if (viol < least) {
        least = viol;
        best_idx = static_cast<int>(i);
      }
    }
  }
  res.best_z = zs[static_cast<size_t>(best_idx)];
  res.best_f = fs[static_cast<size_t>(best_idx)];
  res.info_gain = gp_info_gain(f_gp);
  return res;
}

/// Monte Carlo objective for a decoded design: averaged composite objective
/// and leakage margin over channel draws. The power margin is exact because
/// the precoder is fixed by the decode.
inline std::array<double, 3> mc_objective(const VecR& z,
                                          const LatentCodec& codec,
                                          const Dims& dims, const Weights& w,
                                          int n_mc, Rng& rng) {
  if (n_mc < 1) throw std::invalid_argument("mc_objective: n_mc >= 1");
  const Design d = decode(codec, z);
  double obj = 0.0, leak = 0.0;
  for (int n = 0; n < n_mc; ++n) {
    ChannelSet cs = sample_channels(dims, 1.0, 1.0, rng);
    auto eff = effective_channels(cs, d.theta);
    obj += objective(eff, d.precoder, d.equalizer, cs.noise_user, w);
    leak += leakage_signal_power(eff, d.precoder).total;
  }
  return {obj / n_mc, d.precoder.squaredNorm() - w.power_budget,
          leak / n_mc - w.leak_cap};
}

/// Kernel over decoded designs: periodic phase block, then precoder and
/// equalizer real/imaginary blocks.
inline BlockKernel design_kernel(const Dims& dims) {
  BlockKernel k;
  const int elements = dims.elements;
  const int wsize = 2 * dims.antennas * dims.users;
  k.blocks.push_back({0, elements, true});
  k.blocks.push_back({elements, wsize, false});
  k.blocks.push_back({elements + wsize, 2 * dims.users, false});
  return k;
}

/// Feature vector of a decoded design for design_kernel: raw phases,
/// then Re/Im precoder and Re/Im equalizer.
inline VecR design_features(const LatentCodec& codec, const VecR& z) {
  const Design d = decode(codec, z);
  const Dims& dims = codec.dims;
  const int wsize = dims.antennas * dims.users;
  VecR f(dims.elements + 2 * wsize + 2 * dims.users);
  f.head(dims.elements) = d.theta;
  for (int i = 0; i < wsize; ++i) {
    f(dims.elements + i) = d.precoder.data()[i].real();
    f(dims.elements + wsize + i) = d.precoder.data()[i].imag();
  }
  const int off = dims.elements + 2 * wsize;
  for (int k = 0; k < dims.users; ++k) {
    f(off + k) = d.equalizer(k).real();
    f(off + dims.users + k) = d.equalizer(k).imag();
  }
  return f;
}

/// Latent-space kernel value on decoded designs (symmetric, unit-modulus
/// aware through the wrapped phase block).
inline double kernel_latent(const LatentCodec& codec, const VecR& z1,
                            const VecR& z2, const GpHyper& hyper) {
  const BlockKernel k = design_kernel(codec.dims);
  return k(design_features(codec, z1), design_features(codec, z2), hyper);
}

struct DesignBoResult {
  Design design;
  BoResult bo;
};

/// CSI-free design search: constrained BO in the latent space with the
/// decoded-design kernel and Monte Carlo evaluations.
inline DesignBoResult run_bo_design(const Dims& dims, const Weights& w,
                                    int latent_dim, int n_mc,
                                    const BoConfig& cfg, std::uint64_t seed) {
  const LatentCodec codec =
      make_codec(dims, latent_dim, w.power_budget, derive_seed(seed, 0x1c0dec));
  auto objective_fn = [&](const VecR& z, Rng& rng) {
    return mc_objective(z, codec, dims, w, n_mc, rng);
  };
  auto featurize = [&](const VecR& z) { return design_features(codec, z); };
  BoResult bo = run_bo(objective_fn, codec.latent_dim, design_kernel(dims),
                       featurize, cfg, derive_seed(seed, 0xb0));
  DesignBoResult out{decode(codec, bo.best_z), std::move(bo)};
  return out;
}

}  // namespace irsopt
