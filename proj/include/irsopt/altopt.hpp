#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "irsopt/channel.hpp"
#include "irsopt/rng.hpp"

namespace irsopt {

struct DualState {
  double leak_mult = 0.0;   // multiplier on the leakage constraint
  double power_mult = 0.0;  // multiplier on the power constraint
  double penalty = 1.0;     // quadratic penalty coefficient rho
};

/// Harmonic step decay gamma_t = gamma0 / (1 + alpha * t). Satisfies the
/// usual diminishing-step conditions.
struct StepSchedule {
  double gamma0 = 0.1;
  double alpha = 0.05;
  double at(int t) const { return gamma0 / (1.0 + alpha * t); }
};

struct IterRecord {
  int iter = 0;
  double lagrangian_start = 0.0;  // value before this iteration's primal steps
  double lagrangian = 0.0;
  double objective = 0.0;
  double sum_mse = 0.0;
  double g_leak = 0.0;
  double g_power = 0.0;
  double leak_mult = 0.0;
  double power_mult = 0.0;
  double step = 0.0;
  double dw_norm = 0.0;
  double dc_norm = 0.0;
  double dtheta_norm = 0.0;
  double grad_map_norm = 0.0;
};

struct OptTrace {
  std::vector<IterRecord> iters;
  bool aborted = false;
  std::string abort_reason;
};

/// Channel knowledge available to the optimizer. In noisy mode every
/// gradient is evaluated on an independently perturbed copy
/// sqrt(1-eps^2) * H + eps * E with E drawn CN(0,1) entrywise.
struct CsiOracle {
  const ChannelSet* truth = nullptr;
  double epsilon = 0.0;  // 0 = exact
  Rng* rng = nullptr;

  bool exact() const { return epsilon == 0.0; }

  ChannelSet perturbed() const {
    ChannelSet cs = *truth;
    if (epsilon == 0.0) return cs;
    const double keep = std::sqrt(1.0 - epsilon * epsilon);
    auto mix = [&](cplx v) { return keep * v + epsilon * rng->cnormal(); };
    for (Eigen::Index i = 0; i < cs.bs_irs.size(); ++i)
      cs.bs_irs.data()[i] = mix(cs.bs_irs.data()[i]);
    for (auto& h : cs.irs_user)
      for (Eigen::Index n = 0; n < h.size(); ++n) h(n) = mix(h(n));
    for (auto& g : cs.irs_eav)
      for (Eigen::Index n = 0; n < g.size(); ++n) g(n) = mix(g(n));
    return cs;
  }
};

namespace detail {

/// Quantities shared by the Lagrangian value and all three block gradients
/// at a fixed design point.
struct Point {
  VecC phase;             // e^{j theta}
  MatC eff_users;         // antennas x users
  std::vector<VecC> eff_eavs;
  MatC cross_users;       // (k,j) -> h_eff_k^H w_j
  MatC cross_eavs;        // (e,j) -> h_eff_e^H w_j
  double leak_total = 0.0;
  double sum_mse = 0.0;
  double power = 0.0;
};

inline Point analyze(const ChannelSet& cs, const Design& d) {
  Point p;
  p.phase = phase_coeffs(d.theta);
  const VecC phase_conj = p.phase.conjugate();
  const MatC bs_irs_adj = cs.bs_irs.adjoint();
  const int users = static_cast<int>(cs.irs_user.size());
  const int eavs = static_cast<int>(cs.irs_eav.size());

  p.eff_users.resize(cs.bs_irs.cols(), users);
  for (int k = 0; k < users; ++k)
    p.eff_users.col(k) = bs_irs_adj * phase_conj.cwiseProduct(cs.irs_user[k]);
  p.eff_eavs.resize(eavs);
  for (int e = 0; e < eavs; ++e)
    p.eff_eavs[e] = bs_irs_adj * phase_conj.cwiseProduct(cs.irs_eav[e]);

  p.cross_users = p.eff_users.adjoint() * d.precoder;
  p.cross_eavs.resize(eavs, users);
  for (int e = 0; e < eavs; ++e)
    p.cross_eavs.row(e) = p.eff_eavs[e].adjoint() * d.precoder;

  for (int e = 0; e < eavs; ++e) p.leak_total += p.cross_eavs.row(e).squaredNorm();
  for (int k = 0; k < users; ++k) {
    const double total = p.cross_users.row(k).squaredNorm() + cs.noise_user[k];
    const cplx ck = d.equalizer(k);
    p.sum_mse += std::norm(ck) * total -
                 2.0 * (ck * p.cross_users(k, k)).real() + 1.0;
  }
  p.power = d.precoder.squaredNorm();
  return p;
}

inline double lagrangian_of(const Point& p, const Weights& w,
                            const DualState& dual, double* objective_out,
                            double* g_leak_out, double* g_power_out) {
  const double obj = p.sum_mse + w.leak_weight * p.leak_total +
                     w.power_weight * p.power;
  const double g1 = p.leak_total - w.leak_cap;
  const double g2 = p.power - w.power_budget;
  if (objective_out) *objective_out = obj;
  if (g_leak_out) *g_leak_out = g1;
  if (g_power_out) *g_power_out = g2;
  return obj + dual.leak_mult * g1 + 0.5 * dual.penalty * g1 * g1 +
         dual.power_mult * g2 + 0.5 * dual.penalty * g2 * g2;
}

}  // namespace detail

/// Augmented Lagrangian: objective plus lambda_i g_i + (rho/2) g_i^2 for the
/// leakage and power constraints. Gradients below differentiate exactly this
/// expression, so the effective multiplier on g_i is lambda_i + rho * g_i.
inline double augmented_lagrangian(const ChannelSet& cs, const Design& d,
                                   const Weights& w, const DualState& dual) {
  auto p = detail::analyze(cs, d);
  return detail::lagrangian_of(p, w, dual, nullptr, nullptr, nullptr);
}

/// Real-gradient convention throughout: a complex entry x+jy maps to
/// df/dx + j df/dy, which is what central differences over the real and
/// imaginary parts measure.
inline MatC grad_precoder(const ChannelSet& cs, const Design& d,
                          const Weights& w, const DualState& dual) {
  auto p = detail::analyze(cs, d);
  const double g1 = p.leak_total - w.leak_cap;
  const double g2 = p.power - w.power_budget;
  const double leak_coeff = w.leak_weight + dual.leak_mult + dual.penalty * g1;
  const double power_coeff = w.power_weight + dual.power_mult + dual.penalty * g2;

  const VecC abs2_c = d.equalizer.cwiseAbs2().cast<cplx>();
  MatC grad = 2.0 * p.eff_users * abs2_c.asDiagonal() *
                  (p.eff_users.adjoint() * d.precoder) -
              2.0 * p.eff_users * d.equalizer.conjugate().asDiagonal() +
              2.0 * power_coeff * d.precoder;
  for (const auto& he : p.eff_eavs)
    grad += 2.0 * leak_coeff * he * (he.adjoint() * d.precoder);
  return grad;
}

inline VecC grad_equalizer(const ChannelSet& cs, const Design& d,
                           const Weights& w, const DualState& dual) {
  (void)w;
  (void)dual;  // constraints and penalties do not involve the equalizer
  auto p = detail::analyze(cs, d);
  const int users = static_cast<int>(cs.irs_user.size());
  VecC grad(users);
  for (int k = 0; k < users; ++k) {
    const double total = p.cross_users.row(k).squaredNorm() + cs.noise_user[k];
    grad(k) = 2.0 * (d.equalizer(k) * total - std::conj(p.cross_users(k, k)));
  }
  return grad;
}

inline VecR grad_phases(const ChannelSet& cs, const Design& d, const Weights& w,
                        const DualState& dual) {
  auto p = detail::analyze(cs, d);
  const int users = static_cast<int>(cs.irs_user.size());
  const int eavs = static_cast<int>(cs.irs_eav.size());
  const int elements = static_cast<int>(cs.bs_irs.rows());
  const double g1 = p.leak_total - w.leak_cap;
  const double leak_coeff = w.leak_weight + dual.leak_mult + dual.penalty * g1;

  const MatC irs_tx = cs.bs_irs * d.precoder;  // elements x users
  VecR grad = VecR::Zero(elements);
  for (int k = 0; k < users; ++k) {
    const VecC qk = cs.irs_user[k].conjugate().cwiseProduct(p.phase);
    // interference + desired power terms: sum_j |a_kj|^2
    const VecC s = irs_tx * p.cross_users.row(k).adjoint();
    const double ck2 = std::norm(d.equalizer(k));
    const VecC cross = qk.cwiseProduct(s);
    const VecC direct = qk.cwiseProduct(irs_tx.col(k));
    for (int n = 0; n < elements; ++n) {
      grad(n) += -2.0 * ck2 * cross(n).imag();
      grad(n) += 2.0 * (d.equalizer(k) * direct(n)).imag();
    }
  }
  if (leak_coeff != 0.0) {
    for (int e = 0; e < eavs; ++e) {
      const VecC re = cs.irs_eav[e].conjugate().cwiseProduct(p.phase);
      const VecC s = irs_tx * p.cross_eavs.row(e).adjoint();
      const VecC cross = re.cwiseProduct(s);
      for (int n = 0; n < elements; ++n)
        grad(n) += -2.0 * leak_coeff * cross(n).imag();
    }
  }
  return grad;
}

namespace detail {

struct GradSet {
  MatC precoder;
  VecC equalizer;
  VecR phases;
};

/// Unbiased stochastic gradients from perturbed channel snapshots. Every
/// term that is quadratic in the channels pairs one factor from draw A with
/// one from draw B; the penalty coefficients use draws C and D so they stay
/// independent of the gradient factors. Scale corrections undo the
/// sqrt(1-eps^2) shrinkage of the perturbation.
inline GradSet unbiased_gradients(const ChannelSet& ca, const ChannelSet& cb,
                                  const ChannelSet& cc, const ChannelSet& cd,
                                  const Design& d, const Weights& w,
                                  const DualState& dual, double eps) {
  const double s1 = 1.0 / (1.0 - eps * eps);
  const double s2 = s1 * s1;
  const Point pa = analyze(ca, d);
  const Point pb = analyze(cb, d);
  const Point pc = analyze(cc, d);
  const Point pd = analyze(cd, d);
  const int users = static_cast<int>(ca.irs_user.size());
  const int eavs = static_cast<int>(ca.irs_eav.size());

  // leakage estimate for the penalty pathway, from the coefficient draws
  double leak_est = 0.0;
  for (int e = 0; e < eavs; ++e)
    leak_est +=
        (pc.cross_eavs.row(e) * pd.cross_eavs.row(e).adjoint())(0).real();
  leak_est *= s2;
  const double g1 = leak_est - w.leak_cap;
  const double g2 = d.precoder.squaredNorm() - w.power_budget;
  const double leak_coeff = w.leak_weight + dual.leak_mult + dual.penalty * g1;
  const double power_coeff = w.power_weight + dual.power_mult + dual.penalty * g2;

  GradSet out;
  const VecC abs2_c = d.equalizer.cwiseAbs2().cast<cplx>();
  out.precoder = s2 * 2.0 * pa.eff_users * abs2_c.asDiagonal() *
                     (pb.eff_users.adjoint() * d.precoder) -
                 s1 * (pa.eff_users + pb.eff_users) *
                     d.equalizer.conjugate().asDiagonal() +
                 2.0 * power_coeff * d.precoder;
  for (int e = 0; e < eavs; ++e)
    out.precoder += s2 * 2.0 * leak_coeff * pa.eff_eavs[e] *
                    (pb.eff_eavs[e].adjoint() * d.precoder);

  out.equalizer.resize(users);
  for (int k = 0; k < users; ++k) {
    const double est_total =
        s2 * (pa.cross_users.row(k) * pb.cross_users.row(k).adjoint())(0).real() +
        ca.noise_user[k];
    const cplx desired =
        s1 * 0.5 * (pa.cross_users(k, k) + pb.cross_users(k, k));
    out.equalizer(k) =
        2.0 * (d.equalizer(k) * est_total - std::conj(desired));
  }

  const int elements = static_cast<int>(ca.bs_irs.rows());
  const MatC tx_a = ca.bs_irs * d.precoder;
  const MatC tx_b = cb.bs_irs * d.precoder;
  out.phases = VecR::Zero(elements);
  for (int k = 0; k < users; ++k) {
    const VecC qb = cb.irs_user[k].conjugate().cwiseProduct(pa.phase);
    const VecC qa = ca.irs_user[k].conjugate().cwiseProduct(pa.phase);
    const VecC s = tx_b * pa.cross_users.row(k).adjoint();
    const double ck2 = std::norm(d.equalizer(k));
    const VecC cross = qb.cwiseProduct(s);
    const VecC direct_a = qa.cwiseProduct(tx_a.col(k));
    const VecC direct_b = qb.cwiseProduct(tx_b.col(k));
    for (int n = 0; n < elements; ++n) {
      out.phases(n) += -2.0 * s2 * ck2 * cross(n).imag();
      out.phases(n) +=
          s1 * (d.equalizer(k) * (direct_a(n) + direct_b(n))).imag();
    }
  }
  if (leak_coeff != 0.0) {
    for (int e = 0; e < eavs; ++e) {
      const VecC rb = cb.irs_eav[e].conjugate().cwiseProduct(pa.phase);
      const VecC s = tx_b * pa.cross_eavs.row(e).adjoint();
      const VecC cross = rb.cwiseProduct(s);
      for (int n = 0; n < elements; ++n)
        out.phases(n) += -2.0 * s2 * leak_coeff * cross(n).imag();
    }
  }
  return out;
}

}  // namespace detail

/// Projection onto the unit-modulus set in phase form: wrap to [0, 2pi).
inline VecR project_phases(const VecR& raw) {
  VecR out(raw.size());
  for (Eigen::Index n = 0; n < raw.size(); ++n) out(n) = wrap_phase(raw(n));
  return out;
}

/// Projection of an arbitrary complex diagonal: keep only the argument.
/// Zero-magnitude entries keep the previous phase.
inline VecR project_phases(const VecC& raw_diag, const VecR& previous) {
  VecR out(raw_diag.size());
  for (Eigen::Index n = 0; n < raw_diag.size(); ++n) {
    if (raw_diag(n) == cplx(0.0, 0.0)) {
      out(n) = wrap_phase(previous(n));
    } else {
      out(n) = wrap_phase(std::arg(raw_diag(n)));
    }
  }
  return out;
}

/// Projected dual ascent: multipliers stay nonnegative.
inline DualState dual_update(const DualState& dual, double g_leak,
                             double g_power) {
  DualState out = dual;
  out.leak_mult = std::max(0.0, dual.leak_mult + dual.penalty * g_leak);
  out.power_mult = std::max(0.0, dual.power_mult + dual.penalty * g_power);
  return out;
}

struct AltOptions {
  int max_iters = 100;
  double tol = 1e-3;          // objective improvement threshold
  int patience = 3;           // consecutive small improvements before stop
  bool accelerate = false;    // Nesterov-style extrapolation per block
  bool closed_form_equalizer = false;
  bool fix_equalizer = false; // WPT mode: keep C = I
  bool monotone_guard = true; // backtrack if a block step raises the value
  double epsilon = 0.0;       // > 0 switches to noisy-gradient mode
  double max_step_norm = 1.0; // per-block step clip for noisy gradients
  bool tail_average = true;   // average the second half of noisy iterates
};

struct AltResult {
  Design design;
  DualState dual;
  OptTrace trace;
};

/// Matched-filter start: surface phases uniform, each precoder column aimed
/// at its user with the budget split evenly, MMSE equalizers.
inline Design initial_design(const ChannelSet& cs, const Weights& w, Rng& rng) {
  Dims dims = cs.dims();
  Design d;
  d.theta.resize(dims.elements);
  for (int n = 0; n < dims.elements; ++n) d.theta(n) = rng.uniform(0.0, two_pi);
  auto eff = effective_channels(cs, d.theta);
  d.precoder.resize(dims.antennas, dims.users);
  const double col_power = std::sqrt(w.power_budget / dims.users);
  for (int k = 0; k < dims.users; ++k) {
    const double norm = eff.users.col(k).norm();
    d.precoder.col(k) = norm > 0 ? VecC(eff.users.col(k) * (col_power / norm))
                                 : VecC::Zero(dims.antennas);
  }
  d.equalizer = mmse_equalizer(eff, d.precoder, cs.noise_user);
  return d;
}

/// Alternating projected-gradient descent on the augmented Lagrangian:
/// a joint (precoder, equalizer) step, then a projected phase step, then a
/// dual ascent step, with a harmonic step schedule. With exact channels the
/// steps are backtracked so the value never increases across the primal
/// blocks of an iteration. In noisy mode unbiased stochastic gradients are
/// used with a per-block step clip, and the returned design averages the
/// second half of the iterates; the improvement-based stopping rule only
/// applies to exact runs (the true objective is unobservable otherwise).
inline AltResult run_alternating(const ChannelSet& cs, const Design& init,
                                 const Weights& w, const StepSchedule& sched,
                                 const DualState& dual0, const AltOptions& opt,
                                 Rng* noise_rng = nullptr) {
  w.validate();
  AltResult res;
  res.design = init;
  res.dual = dual0;

  CsiOracle oracle;
  oracle.truth = &cs;
  oracle.epsilon = opt.epsilon;
  oracle.rng = noise_rng;
  if (opt.epsilon > 0.0 && noise_rng == nullptr)
    throw std::invalid_argument("run_alternating: noisy mode needs an rng");
  const bool exact = oracle.exact();
  const bool guard = opt.monotone_guard && exact;

  Design prev_w_block = res.design;  // momentum memory
  Design prev_theta_block = res.design;
  double prev_objective = std::numeric_limits<double>::infinity();
  int stall = 0;

  // tail averages for the noisy mode
  MatC avg_w = MatC::Zero(init.precoder.rows(), init.precoder.cols());
  VecC avg_c = VecC::Zero(init.equalizer.size());
  VecC avg_phase = VecC::Zero(init.theta.size());
  int avg_count = 0;
  const int avg_from = opt.max_iters / 2;

  auto clip = [&](double step, double grad_norm) {
    if (exact || grad_norm * step <= opt.max_step_norm) return step;
    return opt.max_step_norm / grad_norm;
  };

  for (int t = 0; t < opt.max_iters; ++t) {
    const double gamma = sched.at(t);
    IterRecord rec;
    rec.iter = t;
    rec.step = gamma;

    // --- precoder / equalizer block -------------------------------------
    Design cand = res.design;
    const double momentum =
        opt.accelerate ? static_cast<double>(t) / (t + 3.0) : 0.0;

    MatC base_w = res.design.precoder;
    VecC base_c = res.design.equalizer;
    if (momentum > 0.0) {
      base_w += momentum * (res.design.precoder - prev_w_block.precoder);
      base_c += momentum * (res.design.equalizer - prev_w_block.equalizer);
    }
    Design eval = res.design;
    eval.precoder = base_w;
    eval.equalizer = base_c;

    MatC gw;
    VecC gc;
    VecR gtheta_unused;
    if (exact) {
      gw = grad_precoder(cs, eval, w, res.dual);
      gc = opt.fix_equalizer ? VecC::Zero(res.design.equalizer.size())
                             : grad_equalizer(cs, eval, w, res.dual);
    } else {
      auto est = detail::unbiased_gradients(
          oracle.perturbed(), oracle.perturbed(), oracle.perturbed(),
          oracle.perturbed(), eval, w, res.dual, opt.epsilon);
      gw = std::move(est.precoder);
      gc = opt.fix_equalizer ? VecC::Zero(res.design.equalizer.size())
                             : std::move(est.equalizer);
    }

    prev_w_block = res.design;
    double before = augmented_lagrangian(cs, res.design, w, res.dual);
    rec.lagrangian_start = before;
    {
      double step = clip(gamma, std::sqrt(gw.squaredNorm() + gc.squaredNorm()));
      for (int halve = 0;; ++halve) {
        cand.precoder = base_w - step * gw;
        if (!opt.fix_equalizer) cand.equalizer = base_c - step * gc;
        if (!guard) break;
        if (augmented_lagrangian(cs, cand, w, res.dual) <= before + 1e-12)
          break;
        if (halve == 0 && momentum > 0.0) {
          // drop the extrapolation before shrinking the step
          base_w = res.design.precoder;
          base_c = res.design.equalizer;
          continue;
        }
        step *= 0.5;
        if (halve > 60) {
          cand = res.design;  // no progress possible at this scale
          break;
        }
      }
    }
    if (opt.closed_form_equalizer && !opt.fix_equalizer && exact)
      cand.equalizer = mmse_equalizer(cs, cand);

    rec.dw_norm = (cand.precoder - res.design.precoder).norm();
    rec.dc_norm = (cand.equalizer - res.design.equalizer).norm();
    res.design = cand;

    // --- phase block ------------------------------------------------------
    VecR theta_eval = res.design.theta;
    if (momentum > 0.0)
      theta_eval += momentum * (res.design.theta - prev_theta_block.theta);
    Design theta_point = res.design;
    theta_point.theta = theta_eval;

    VecR gtheta;
    if (exact) {
      gtheta = grad_phases(cs, theta_point, w, res.dual);
    } else {
      auto est = detail::unbiased_gradients(
          oracle.perturbed(), oracle.perturbed(), oracle.perturbed(),
          oracle.perturbed(), theta_point, w, res.dual, opt.epsilon);
      gtheta = std::move(est.phases);
    }

    prev_theta_block = res.design;
    before = augmented_lagrangian(cs, res.design, w, res.dual);
    {
      double step = clip(gamma, gtheta.norm());
      VecR base = theta_eval;
      for (int halve = 0;; ++halve) {
        cand.theta = project_phases(VecR(base - step * gtheta));
        if (!guard) break;
        if (augmented_lagrangian(cs, cand, w, res.dual) <= before + 1e-12)
          break;
        if (halve == 0 && momentum > 0.0) {
          base = res.design.theta;
          continue;
        }
        step *= 0.5;
        if (halve > 60) {
          cand.theta = res.design.theta;
          break;
        }
      }
    }
    rec.dtheta_norm = (cand.theta - res.design.theta).norm();
    res.design = cand;

    // --- duals and bookkeeping ---------------------------------------------
    auto point = detail::analyze(cs, res.design);
    rec.lagrangian = detail::lagrangian_of(point, w, res.dual, &rec.objective,
                                           &rec.g_leak, &rec.g_power);
    rec.sum_mse = point.sum_mse;
    res.dual = dual_update(res.dual, rec.g_leak, rec.g_power);
    rec.leak_mult = res.dual.leak_mult;
    rec.power_mult = res.dual.power_mult;
    {
      const MatC gw2 = grad_precoder(cs, res.design, w, res.dual);
      const VecC gc2 = grad_equalizer(cs, res.design, w, res.dual);
      const VecR gt2 = grad_phases(cs, res.design, w, res.dual);
      double acc = gw2.squaredNorm() + gc2.squaredNorm();
      for (Eigen::Index n = 0; n < gt2.size(); ++n) {
        double moved = res.design.theta(n) - wrap_phase(res.design.theta(n) -
                                                        gamma * gt2(n));
        moved = std::remainder(moved, two_pi) / gamma;
        acc += moved * moved;
      }
      rec.grad_map_norm = std::sqrt(acc);
    }
    res.trace.iters.push_back(rec);

    if (!std::isfinite(rec.lagrangian) || !std::isfinite(rec.objective)) {
      res.trace.aborted = true;
      res.trace.abort_reason = "non-finite value at iteration " +
                               std::to_string(t);
      return res;
    }

    if (!exact && opt.tail_average && t >= avg_from) {
      avg_w += res.design.precoder;
      avg_c += res.design.equalizer;
      avg_phase += phase_coeffs(res.design.theta);
      ++avg_count;
    }

    if (exact) {
      const double improvement = prev_objective - rec.objective;
      stall = improvement < opt.tol ? stall + 1 : 0;
      prev_objective = rec.objective;
      if (stall >= opt.patience) break;
    }
  }

  if (!exact && opt.tail_average && avg_count > 0) {
    res.design.precoder = avg_w / avg_count;
    res.design.equalizer = avg_c / avg_count;
    res.design.theta = project_phases(VecC(avg_phase), res.design.theta);
  }
  return res;
}

/// Regularized inverse precoder with a rank-one eavesdropper repulsion term.
/// Requires exactly one eavesdropper; ridge > 0 keeps the system invertible.
inline MatC ridge_nulling_precoder(const ChannelSet& cs, const VecR& theta,
                                   const VecC& equalizer, double ridge,
                                   double null_weight) {
  if (cs.irs_eav.size() != 1)
    throw std::invalid_argument("ridge_nulling_precoder: needs exactly one eavesdropper");
  if (ridge <= 0.0)
    throw std::invalid_argument("ridge_nulling_precoder: ridge must be positive");
  auto eff = effective_channels(cs, theta);
  const Eigen::Index antennas = eff.users.rows();
  MatC lhs = eff.users * equalizer.cwiseAbs2().cast<cplx>().asDiagonal() *
                 eff.users.adjoint() +
             ridge * MatC::Identity(antennas, antennas) +
             null_weight * eff.eavs[0] * eff.eavs[0].adjoint();
  const MatC rhs = eff.users * equalizer.conjugate().asDiagonal();
  return lhs.llt().solve(rhs);
}

/// Interference-free high-power precoder: beams along the dominant left
/// singular vectors of the effective channel with the given per-stream
/// powers, rescaled if they exceed the budget.
inline MatC highsnr_precoder(const ChannelSet& cs, const VecR& theta,
                             const VecR& stream_power, double power_budget) {
  auto eff = effective_channels(cs, theta);
  const int antennas = static_cast<int>(eff.users.rows());
  const int users = static_cast<int>(eff.users.cols());
  if (stream_power.size() != users)
    throw std::invalid_argument("highsnr_precoder: one power per user");
  VecR powers = stream_power;
  const double total = powers.sum();
  if (total > power_budget) powers *= power_budget / total;

  Eigen::JacobiSVD<MatC> svd(eff.users, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const int available = static_cast<int>(sv.size());
  int rank = 0;
  for (int i = 0; i < available; ++i)
    if (sv(i) > 1e-12 * sv(0)) ++rank;
  if (rank < users)
    std::cerr << "highsnr_precoder: effective channel rank " << rank << " < "
              << users << " users; extra columns zeroed\n";

  // Column order within the dominant subspace is free; pair each user with
  // the singular vector it overlaps most (largest overlaps first).
  std::vector<std::pair<double, std::pair<int, int>>> overlaps;
  for (int k = 0; k < users; ++k)
    for (int i = 0; i < rank; ++i)
      overlaps.push_back(
          {std::abs((eff.users.col(k).adjoint() * svd.matrixU().col(i))(0)),
           {k, i}});
  std::sort(overlaps.begin(), overlaps.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> beam_of(users, -1);
  std::vector<char> beam_used(rank, 0);
  for (const auto& [score, pair] : overlaps) {
    auto [k, i] = pair;
    if (beam_of[k] >= 0 || beam_used[i]) continue;
    beam_of[k] = i;
    beam_used[i] = 1;
  }
  MatC out = MatC::Zero(antennas, users);
  for (int k = 0; k < users; ++k)
    if (beam_of[k] >= 0)
      out.col(k) = svd.matrixU().col(beam_of[k]) * std::sqrt(powers(k));
  return out;
}

/// Interference-free power-allocation bound on the achievable sum MSE:
/// min over p_k >= 0, sum p_k <= budget of sum_k s_k / (b_k p_k + s_k)
/// with b_k the squared effective channel norm. Solved by bisection on the
/// budget multiplier; each inner solution is closed-form.
inline double lower_bound_cost(const ChannelSet& cs, const VecR& theta,
                               double power_budget) {
  auto eff = effective_channels(cs, theta);
  const int users = static_cast<int>(eff.users.cols());
  std::vector<double> gain(users), noise(users);
  for (int k = 0; k < users; ++k) {
    gain[k] = eff.users.col(k).squaredNorm();
    noise[k] = cs.noise_user[k];
  }
  auto alloc = [&](double nu, std::vector<double>* out) {
    double total = 0.0;
    for (int k = 0; k < users; ++k) {
      double p = 0.0;
      if (gain[k] > 0.0)
        p = std::max(0.0,
                     (std::sqrt(noise[k] * gain[k] / nu) - noise[k]) / gain[k]);
      if (out) (*out)[k] = p;
      total += p;
    }
    return total;
  };
  std::vector<double> p(users, 0.0);
  if (power_budget <= 0.0) {
    // no power: every user stuck at MSE 1
    return static_cast<double>(users);
  }
  double hi = 0.0;
  for (int k = 0; k < users; ++k)
    if (gain[k] > 0.0) hi = std::max(hi, gain[k] / noise[k]);
  if (hi == 0.0) return static_cast<double>(users);
  double lo = hi * 1e-16;
  while (alloc(lo, nullptr) < power_budget) lo *= 0.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (alloc(mid, nullptr) > power_budget ? lo : hi) = mid;
  }
  alloc(hi, &p);
  // spend exactly the budget (bisection leaves a sliver)
  const double total = alloc(hi, nullptr);
  if (total > 0.0)
    for (auto& pk : p) pk *= power_budget / total;
  double bound = 0.0;
  for (int k = 0; k < users; ++k)
    bound += noise[k] / (gain[k] * p[k] + noise[k]);
  return bound;
}

}  // namespace irsopt
