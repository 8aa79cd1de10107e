#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsopt/rng.hpp"

namespace irsopt {

enum class Attack { always_one, always_zero, inverted, uniform_random };

/// Consensus aggregation rule. naive_mean is the untrimmed baseline used
/// for resilience comparisons.
enum class ConsensusRule { trimmed, naive_mean };

inline Attack attack_from_string(const std::string& s) {
  if (s == "always_one") return Attack::always_one;
  if (s == "always_zero") return Attack::always_zero;
  if (s == "inverted") return Attack::inverted;
  if (s == "uniform_random") return Attack::uniform_random;
  throw std::invalid_argument("unknown attack kind: " + s);
}

struct Topology {
  int user_count = 0;
  std::vector<std::vector<int>> neighbors;  // symmetric, excludes self
  std::vector<char> byzantine;              // per-user flag

  int byzantine_count() const {
    int n = 0;
    for (char b : byzantine) n += b ? 1 : 0;
    return n;
  }

  int honest_count() const { return user_count - byzantine_count(); }

  /// Smallest number of honest neighbors over honest users.
  int min_honest_degree() const {
    int best = user_count;
    for (int k = 0; k < user_count; ++k) {
      if (byzantine[k]) continue;
      int deg = 0;
      for (int i : neighbors[k]) deg += byzantine[i] ? 0 : 1;
      best = std::min(best, deg);
    }
    return best;
  }

  static Topology fully_connected(int users, const std::vector<int>& byz) {
    Topology t;
    t.user_count = users;
    t.neighbors.resize(users);
    t.byzantine.assign(users, 0);
    for (int i : byz) t.byzantine.at(i) = 1;
    for (int k = 0; k < users; ++k)
      for (int i = 0; i < users; ++i)
        if (i != k) t.neighbors[k].push_back(i);
    return t;
  }

  /// Random graph with the given connection probability, regenerated until
  /// every honest user has at least min_degree neighbors (fully-connected
  /// fallback after 100 attempts).
  static Topology erdos_renyi(int users, double connect_prob,
                              const std::vector<int>& byz, int min_degree,
                              Rng& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Topology t;
      t.user_count = users;
      t.neighbors.resize(users);
      t.byzantine.assign(users, 0);
      for (int i : byz) t.byzantine.at(i) = 1;
      for (int a = 0; a < users; ++a)
        for (int b = a + 1; b < users; ++b)
          if (rng.uniform() < connect_prob) {
            t.neighbors[a].push_back(b);
            t.neighbors[b].push_back(a);
          }
      bool ok = true;
      for (int k = 0; k < users && ok; ++k)
        if (!t.byzantine[k] &&
            static_cast<int>(t.neighbors[k].size()) < min_degree)
          ok = false;
      if (ok) return t;
    }
    return fully_connected(users, byz);
  }
};

struct BeliefState {
  std::vector<double> logit;   // psi
  std::vector<double> belief;  // pi = sigmoid(psi)
  std::vector<double> shared;  // delta broadcast to neighbors
};

struct FusionParams {
  double attention_temp = 0.01;  // softmax sharpness, > 0
  double threshold = 0.5;        // decision threshold in (0,1)
  int rounds = 25;
  int trim_count = 0;            // values trimmed from each tail
};

inline double clamp_logit(double psi) {
  return std::clamp(psi, -50.0, 50.0);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit_of(double p) { return std::log(p / (1.0 - p)); }

/// Received energy over `samples` draws. Under PU-active the per-sample
/// variance grows from noise_var to noise_var * (1 + snr_linear).
inline double energy_statistic(bool pu_active, int samples, double snr_linear,
                               double noise_var, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("energy_statistic: samples >= 1");
  if (noise_var <= 0) throw std::invalid_argument("energy_statistic: noise_var > 0");
  const double var = noise_var * (pu_active ? 1.0 + snr_linear : 1.0);
  double acc = 0.0;
  for (int j = 0; j < samples; ++j) acc += std::norm(rng.cnormal(var));
  return acc;
}

/// Exact log-likelihood ratio of the energy statistic for the
/// Gaussian-signal-in-Gaussian-noise model.
inline double llr(double energy, int samples, double snr_linear,
                  double noise_var) {
  return -samples * std::log1p(snr_linear) +
         energy * snr_linear / (noise_var * (1.0 + snr_linear));
}

inline void logit_update(BeliefState& st, int k, double ell) {
  st.logit[k] = clamp_logit(st.logit[k] + ell);
  st.belief[k] = sigmoid(st.logit[k]);
}

/// Mean after discarding the trim_count largest and smallest values.
inline double trimmed_mean(std::vector<double> values, int trim_count) {
  const int n = static_cast<int>(values.size());
  if (n - 2 * trim_count < 1)
    throw std::invalid_argument("trimmed_mean: not enough values to trim");
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (int i = trim_count; i < n - trim_count; ++i) acc += values[i];
  return acc / (n - 2 * trim_count);
}

/// Consensus value for user k from its current belief and the neighbors'
/// previous-round shared values. Small neighborhoods fall back to the local
/// belief; otherwise the trimmed (or naive) mean is capped by the belief.
inline double consensus_value(double belief_now, const Topology& topo, int k,
                              const std::vector<double>& prev_shared,
                              int trim_count,
                              ConsensusRule rule = ConsensusRule::trimmed) {
  const auto& nbrs = topo.neighbors[k];
  if (nbrs.empty()) return belief_now;
  if (rule == ConsensusRule::trimmed &&
      static_cast<int>(nbrs.size()) < 2 * trim_count + 1)
    return belief_now;
  std::vector<double> vals;
  vals.reserve(nbrs.size());
  for (int i : nbrs) vals.push_back(prev_shared[i]);
  const double mean = (rule == ConsensusRule::trimmed)
                          ? trimmed_mean(std::move(vals), trim_count)
                          : trimmed_mean(std::move(vals), 0);
  return std::min(belief_now, mean);
}

inline double attack_value(Attack kind, double internal_belief, Rng& rng) {
  switch (kind) {
    case Attack::always_one: return 1.0;
    case Attack::always_zero: return 0.0;
    case Attack::inverted: return 1.0 - internal_belief;
    case Attack::uniform_random: return rng.uniform();
  }
  return 0.0;
}

inline BeliefState init_beliefs(const Topology& topo, double prior_h1,
                                Attack attack, Rng& rng) {
  BeliefState st;
  st.logit.assign(topo.user_count, logit_of(prior_h1));
  st.belief.assign(topo.user_count, prior_h1);
  st.shared.assign(topo.user_count, prior_h1);
  for (int k = 0; k < topo.user_count; ++k)
    if (topo.byzantine[k]) st.shared[k] = attack_value(attack, prior_h1, rng);
  return st;
}

/// One synchronous round: every user ingests its observation, honest users
/// aggregate the previous round's broadcasts, Byzantine users emit their
/// attack value. Byzantine users still track an internal belief so that the
/// inverted attack has something to invert.
inline void run_sensing_round(BeliefState& st, const Topology& topo,
                              const std::vector<double>& energies, int samples,
                              double snr_linear, double noise_var,
                              Attack attack, int trim_count, Rng& rng,
                              ConsensusRule rule = ConsensusRule::trimmed) {
  if (static_cast<int>(energies.size()) != topo.user_count)
    throw std::invalid_argument("run_sensing_round: one observation per user");
  const std::vector<double> prev_shared = st.shared;
  for (int k = 0; k < topo.user_count; ++k) {
    const double ell = llr(energies[k], samples, snr_linear, noise_var);
    logit_update(st, k, ell);
    if (topo.byzantine[k]) {
      st.shared[k] = attack_value(attack, st.belief[k], rng);
    } else {
      st.shared[k] =
          consensus_value(st.belief[k], topo, k, prev_shared, trim_count, rule);
    }
  }
}

/// Attention-weighted fusion of user reports with the BS's own belief.
/// Reports are trimmed by count, survivors weighted by closeness to their
/// mean, and the result capped by the local belief (min rule).
inline double bs_fuse(const std::vector<double>& deltas, double bs_belief,
                      const FusionParams& params) {
  const int n = static_cast<int>(deltas.size());
  if (n < 2 * params.trim_count + 1)
    throw std::invalid_argument("bs_fuse: insufficient reports");
  std::vector<double> sorted = deltas;
  std::sort(sorted.begin(), sorted.end());
  const int lo = params.trim_count;
  const int hi = n - params.trim_count;
  double mean = 0.0;
  for (int i = lo; i < hi; ++i) mean += sorted[i];
  mean /= (hi - lo);
  double wsum = 0.0, acc = 0.0;
  for (int i = lo; i < hi; ++i) {
    const double d = sorted[i] - mean;
    const double w = std::exp(-d * d / params.attention_temp);
    wsum += w;
    acc += w * sorted[i];
  }
  const double attended = acc / wsum;
  return std::min(attended, bs_belief);
}

/// Threshold decision; boundary is inclusive (fused == tau decides active).
inline bool decide(double fused, double tau) { return fused >= tau; }

inline int pu_markov_step(int state, double p01, double p10, Rng& rng) {
  if (p01 < 0 || p01 > 1 || p10 < 0 || p10 > 1)
    throw std::invalid_argument("pu_markov_step: probabilities in [0,1]");
  const double u = rng.uniform();
  if (state == 0) return u < p01 ? 1 : 0;
  return u < p10 ? 0 : 1;
}

/// Everything needed to simulate one sensing frame.
struct SensingScenario {
  Topology topo;
  FusionParams fusion;
  Attack attack = Attack::always_one;
  ConsensusRule rule = ConsensusRule::trimmed;
  int samples = 10;         // energy samples per user per round
  double snr_linear = 1.0;
  double noise_var = 1.0;
  double prior_h1 = 0.4;
  int bs_samples = 10;      // BS's own single measurement
};

struct SensingTrial {
  std::vector<double> fused_by_round;  // BS fusion applied to each round
  double fused_final = 0.0;
  BeliefState state;                   // final per-user state
};

/// Runs `rounds` synchronous update rounds with a fixed PU hypothesis, then
/// fuses at the BS. The BS takes one measurement of its own per frame; the
/// per-round fused values reuse that single BS belief.
inline SensingTrial run_sensing_trial(const SensingScenario& sc, bool pu_active,
                                      Rng& rng) {
  SensingTrial out;
  out.state = init_beliefs(sc.topo, sc.prior_h1, sc.attack, rng);
  const int users = sc.topo.user_count;

  double bs_logit = logit_of(sc.prior_h1);
  const double bs_energy =
      energy_statistic(pu_active, sc.bs_samples, sc.snr_linear, sc.noise_var, rng);
  bs_logit = clamp_logit(
      bs_logit + llr(bs_energy, sc.bs_samples, sc.snr_linear, sc.noise_var));
  const double bs_belief = sigmoid(bs_logit);

  std::vector<double> energies(users);
  out.fused_by_round.reserve(sc.fusion.rounds);
  for (int t = 0; t < sc.fusion.rounds; ++t) {
    for (int k = 0; k < users; ++k)
      energies[k] =
          energy_statistic(pu_active, sc.samples, sc.snr_linear, sc.noise_var, rng);
    run_sensing_round(out.state, sc.topo, energies, sc.samples, sc.snr_linear,
                      sc.noise_var, sc.attack, sc.fusion.trim_count, rng, sc.rule);
    out.fused_by_round.push_back(
        bs_fuse(out.state.shared, bs_belief, sc.fusion));
  }
  out.fused_final = out.fused_by_round.back();
  return out;
}

/// Empirical (1 - target_pfa) quantile of the fused belief under the null
/// hypothesis. Needs enough trials to resolve the target tail.
inline double calibrate_threshold(const SensingScenario& sc, double target_pfa,
                                  int trials, Rng& rng) {
  if (target_pfa <= 0.0 || target_pfa >= 1.0)
    throw std::invalid_argument("calibrate_threshold: target_pfa in (0,1)");
  if (trials < static_cast<int>(std::ceil(1.0 / target_pfa)))
    throw std::invalid_argument("calibrate_threshold: too few trials");
  std::vector<double> fused(trials);
  for (int i = 0; i < trials; ++i)
    fused[i] = run_sensing_trial(sc, false, rng).fused_final;
  std::sort(fused.begin(), fused.end());
  const auto idx = static_cast<size_t>(
      std::min<long long>(trials - 1, std::llround((1.0 - target_pfa) * trials)));
  return fused[idx];
}

}  // namespace irsopt
