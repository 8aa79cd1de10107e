#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "irsopt/rng.hpp"

namespace irsopt {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Wraps an angle to [0, 2*pi).
inline double wrap_phase(double theta) {
  double w = std::fmod(theta, two_pi);
  if (w < 0.0) w += two_pi;
  return w;
}

struct Dims {
  int antennas = 1;      // BS transmit antennas
  int elements = 1;      // reflecting elements
  int users = 1;         // honest users
  int eavesdroppers = 0;

  void validate() const {
    if (antennas < 1 || elements < 1 || users < 1 || eavesdroppers < 0)
      throw std::invalid_argument("Dims: antennas, elements, users must be >= 1 and eavesdroppers >= 0");
  }
};

/// One realization of all links: BS->IRS matrix plus IRS->user and
/// IRS->eavesdropper vectors, with per-receiver noise variances.
struct ChannelSet {
  MatC bs_irs;                  // elements x antennas
  std::vector<VecC> irs_user;   // users vectors of length elements
  std::vector<VecC> irs_eav;    // eavesdroppers vectors of length elements
  std::vector<double> noise_user;
  std::vector<double> noise_eav;

  Dims dims() const {
    Dims d;
    d.elements = static_cast<int>(bs_irs.rows());
    d.antennas = static_cast<int>(bs_irs.cols());
    d.users = static_cast<int>(irs_user.size());
    d.eavesdroppers = static_cast<int>(irs_eav.size());
    return d;
  }
};

/// Decision triple: surface phases theta (unit-modulus by construction),
/// precoder columns per user, scalar equalizer per user.
struct Design {
  VecR theta;     // elements, radians
  MatC precoder;  // antennas x users
  VecC equalizer; // users

  static Design zero(const Dims& d) {
    Design x;
    x.theta = VecR::Zero(d.elements);
    x.precoder = MatC::Zero(d.antennas, d.users);
    x.equalizer = VecC::Zero(d.users);
    return x;
  }
};

struct Weights {
  double leak_weight = 1.0;    // soft leakage penalty
  double power_weight = 0.01;  // precoder norm regularization
  double leak_cap = 1.0;       // hard leakage cap
  double power_budget = 1.0;   // transmit power budget

  void validate() const {
    if (leak_weight < 0 || power_weight < 0)
      throw std::invalid_argument("Weights: penalty weights must be nonnegative");
    if (leak_cap <= 0 || power_budget <= 0)
      throw std::invalid_argument("Weights: leak_cap and power_budget must be positive");
  }
};

/// All channel entries i.i.d. CN(0,1): real and imaginary parts N(0, 1/2).
/// Fill order is fixed (bs_irs column-major, then user vectors, then
/// eavesdropper vectors) so a given seed always yields the same set.
inline ChannelSet sample_channels(const Dims& d, double noise_user,
                                  double noise_eav, Rng& rng) {
  d.validate();
  if (noise_user <= 0 || noise_eav <= 0)
    throw std::invalid_argument("sample_channels: noise variances must be positive");
  ChannelSet cs;
  cs.bs_irs.resize(d.elements, d.antennas);
  for (int c = 0; c < d.antennas; ++c)
    for (int r = 0; r < d.elements; ++r) cs.bs_irs(r, c) = rng.cnormal();
  cs.irs_user.resize(d.users);
  for (int k = 0; k < d.users; ++k) {
    cs.irs_user[k].resize(d.elements);
    for (int n = 0; n < d.elements; ++n) cs.irs_user[k](n) = rng.cnormal();
  }
  cs.irs_eav.resize(d.eavesdroppers);
  for (int e = 0; e < d.eavesdroppers; ++e) {
    cs.irs_eav[e].resize(d.elements);
    for (int n = 0; n < d.elements; ++n) cs.irs_eav[e](n) = rng.cnormal();
  }
  cs.noise_user.assign(d.users, noise_user);
  cs.noise_eav.assign(d.eavesdroppers, noise_eav);
  return cs;
}

/// Unit-modulus reflection coefficients e^{j theta_n}.
inline VecC phase_coeffs(const VecR& theta) {
  VecC phi(theta.size());
  for (Eigen::Index n = 0; n < theta.size(); ++n)
    phi(n) = std::polar(1.0, theta(n));
  return phi;
}

/// Effective BS->receiver channels through the reflecting surface.
struct EffectiveChannels {
  MatC users;             // antennas x users, column k: H^H Phi^H h_k
  std::vector<VecC> eavs; // per eavesdropper: H^H Phi^H g_e
};

inline EffectiveChannels effective_channels(const ChannelSet& cs,
                                            const VecR& theta) {
  if (theta.size() != cs.bs_irs.rows())
    throw std::invalid_argument("effective_channels: theta length must match element count");
  const VecC phi_conj = phase_coeffs(theta).conjugate();
  const MatC bs_irs_adj = cs.bs_irs.adjoint();  // antennas x elements
  EffectiveChannels eff;
  eff.users.resize(cs.bs_irs.cols(), static_cast<Eigen::Index>(cs.irs_user.size()));
  for (size_t k = 0; k < cs.irs_user.size(); ++k)
    eff.users.col(static_cast<Eigen::Index>(k)) =
        bs_irs_adj * phi_conj.cwiseProduct(cs.irs_user[k]);
  eff.eavs.resize(cs.irs_eav.size());
  for (size_t e = 0; e < cs.irs_eav.size(); ++e)
    eff.eavs[e] = bs_irs_adj * phi_conj.cwiseProduct(cs.irs_eav[e]);
  return eff;
}

/// Per-user symbol MSE given the effective channel matrix (column per user).
inline double mse_user(const EffectiveChannels& eff, const MatC& precoder,
                       const VecC& equalizer, double noise_var, int k) {
  const VecC h = eff.users.col(k);
  const Eigen::RowVectorXcd row = h.adjoint() * precoder;  // entries h^H w_j
  const double total = row.squaredNorm() + noise_var;
  const cplx desired = row(k);
  const cplx ck = equalizer(k);
  return std::norm(ck) * total - 2.0 * (ck * desired).real() + 1.0;
}

inline double mse_k(const ChannelSet& cs, const Design& d, int k) {
  if (k < 0 || k >= static_cast<int>(cs.irs_user.size()))
    throw std::out_of_range("mse_k: user index out of range");
  return mse_user(effective_channels(cs, d.theta), d.precoder, d.equalizer,
                  cs.noise_user[static_cast<size_t>(k)], k);
}

struct Leakage {
  std::vector<double> per_eav;  // signal power received by each eavesdropper
  double total = 0.0;
};

inline Leakage leakage_signal_power(const EffectiveChannels& eff,
                                    const MatC& precoder) {
  Leakage out;
  out.per_eav.resize(eff.eavs.size());
  for (size_t e = 0; e < eff.eavs.size(); ++e) {
    out.per_eav[e] = (eff.eavs[e].adjoint() * precoder).squaredNorm();
    out.total += out.per_eav[e];
  }
  return out;
}

inline Leakage leakage_signal_power(const ChannelSet& cs, const Design& d) {
  return leakage_signal_power(effective_channels(cs, d.theta), d.precoder);
}

inline double sinr_user(const EffectiveChannels& eff, const MatC& precoder,
                        double noise_var, int k) {
  const VecC h = eff.users.col(k);
  const Eigen::RowVectorXcd row = h.adjoint() * precoder;
  const double desired = std::norm(row(k));
  const double interference = row.squaredNorm() - desired;
  return desired / (interference + noise_var);
}

inline double sinr_k(const ChannelSet& cs, const Design& d, int k) {
  if (k < 0 || k >= static_cast<int>(cs.irs_user.size()))
    throw std::out_of_range("sinr_k: user index out of range");
  return sinr_user(effective_channels(cs, d.theta), d.precoder,
                   cs.noise_user[static_cast<size_t>(k)], k);
}

/// MMSE equalizer: c_k = (w_k^H h_eff_k) / (sum_j |h_eff_k^H w_j|^2 + noise).
/// Achieves MSE_k = 1/(1 + SINR_k) for every user.
inline VecC mmse_equalizer(const EffectiveChannels& eff, const MatC& precoder,
                           const std::vector<double>& noise_user) {
  const Eigen::Index users = eff.users.cols();
  VecC c(users);
  for (Eigen::Index k = 0; k < users; ++k) {
    const Eigen::RowVectorXcd row = eff.users.col(k).adjoint() * precoder;
    const double denom = row.squaredNorm() + noise_user[static_cast<size_t>(k)];
    c(k) = std::conj(row(k)) / denom;
  }
  return c;
}

inline VecC mmse_equalizer(const ChannelSet& cs, const Design& d) {
  return mmse_equalizer(effective_channels(cs, d.theta), d.precoder,
                        cs.noise_user);
}

inline double sum_mse(const EffectiveChannels& eff, const MatC& precoder,
                      const VecC& equalizer,
                      const std::vector<double>& noise_user) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < eff.users.cols(); ++k)
    total += mse_user(eff, precoder, equalizer,
                      noise_user[static_cast<size_t>(k)], static_cast<int>(k));
  return total;
}

/// Composite objective: sum MSE + leak_weight * total leakage
/// + power_weight * ||W||_F^2.
inline double objective(const EffectiveChannels& eff, const MatC& precoder,
                        const VecC& equalizer,
                        const std::vector<double>& noise_user,
                        const Weights& w) {
  return sum_mse(eff, precoder, equalizer, noise_user) +
         w.leak_weight * leakage_signal_power(eff, precoder).total +
         w.power_weight * precoder.squaredNorm();
}

inline double objective(const ChannelSet& cs, const Design& d,
                        const Weights& w) {
  return objective(effective_channels(cs, d.theta), d.precoder, d.equalizer,
                   cs.noise_user, w);
}

struct ConstraintValues {
  double leak = 0.0;   // total leakage - leak_cap
  double power = 0.0;  // ||W||_F^2 - power_budget
  bool feasible() const { return leak <= 0.0 && power <= 0.0; }
};

inline ConstraintValues constraint_values(const EffectiveChannels& eff,
                                          const MatC& precoder,
                                          const Weights& w) {
  ConstraintValues g;
  g.leak = leakage_signal_power(eff, precoder).total - w.leak_cap;
  g.power = precoder.squaredNorm() - w.power_budget;
  return g;
}

inline ConstraintValues constraint_values(const ChannelSet& cs, const Design& d,
                                          const Weights& w) {
  return constraint_values(effective_channels(cs, d.theta), d.precoder, w);
}

}  // namespace irsopt
