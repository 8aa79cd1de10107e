#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsopt/altopt.hpp"
#include "irsopt/bo.hpp"
#include "irsopt/channel.hpp"
#include "irsopt/sensing.hpp"

namespace irsopt {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfgdetail {

inline void check_keys(const nlohmann::json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T read(const nlohmann::json& obj, const std::string& where, const char* key,
       T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace cfgdetail

struct SensingParams {
  int samples = 10;  // energy samples per round
  std::vector<int> samples_list;  // optional multi-curve sweep
  int rounds = 25;
  double snr_db = 0.0;  // operating point for fixed-SNR experiments
  double p01 = 0.2;
  double p10 = 0.3;
  double pfa_target = 0.01;
  std::string attack = "inverted";
  std::string consensus = "trimmed";
  std::string topology = "full";
  double connect_prob = 0.8;
  double attention_temp = 0.01;
  int calibration_trials = 10000;
};

struct OptimizerParams {
  double leak_weight = 1.0;
  double power_weight = 0.01;
  double leak_cap = 1.0;
  double power_budget = 1.0;
  double gamma0 = 0.1;
  double alpha = 0.05;
  double rho = 1.0;
  int t_max = 100;
  double tol = 1e-3;
  bool accelerate = false;
  bool closed_form_equalizer = false;
  double epsilon = 0.1;  // partial-CSI perturbation level
};

struct BoParams {
  int budget = 80;
  int n_init = 10;
  int n_mc = 32;
  std::string acquisition = "eic";
  int latent_dim = 0;  // 0: dimension rule from jl_epsilon and budget
  double jl_epsilon = 0.5;
  double box = 3.0;
  int candidates = 1024;
  int refine_steps = 20;
};

struct ExperimentConfig {
  std::string experiment;
  Dims dims{8, 64, 8, 3};
  SensingParams sensing;
  OptimizerParams optimizer;
  BoParams bo;
  std::vector<double> sweep;
  int trials = 100;
  std::uint64_t seed = 1;
};

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using cfgdetail::check_keys;
  using cfgdetail::read;
  check_keys(j, "config",
             {"experiment", "dims", "sensing", "optimizer", "bo", "sweep",
              "trials", "seed"});
  ExperimentConfig cfg;
  if (!j.contains("experiment"))
    throw ConfigError("config.experiment: required");
  cfg.experiment = read<std::string>(j, "config", "experiment", "");
  static const char* kinds[] = {"pd_vs_snr",  "pd_vs_iter", "roc",
                                "mse_vs_iter", "mse_vs_snr", "wpt_zeta",
                                "bo_vs_alt"};
  if (std::find_if(std::begin(kinds), std::end(kinds), [&](const char* k) {
        return cfg.experiment == k;
      }) == std::end(kinds))
    throw ConfigError("config.experiment: unknown kind '" + cfg.experiment +
                      "'");

  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    check_keys(d, "dims", {"antennas", "elements", "users", "eavesdroppers"});
    cfg.dims.antennas = read<int>(d, "dims", "antennas", cfg.dims.antennas);
    cfg.dims.elements = read<int>(d, "dims", "elements", cfg.dims.elements);
    cfg.dims.users = read<int>(d, "dims", "users", cfg.dims.users);
    cfg.dims.eavesdroppers =
        read<int>(d, "dims", "eavesdroppers", cfg.dims.eavesdroppers);
    cfg.dims.validate();
  }
  if (j.contains("sensing")) {
    const auto& s = j.at("sensing");
    check_keys(s, "sensing",
               {"samples", "samples_list", "rounds", "snr_db", "p01", "p10",
                "pfa_target", "attack", "consensus", "topology",
                "connect_prob", "attention_temp", "calibration_trials"});
    auto& out = cfg.sensing;
    out.samples = read<int>(s, "sensing", "samples", out.samples);
    out.samples_list =
        read<std::vector<int>>(s, "sensing", "samples_list", {});
    out.rounds = read<int>(s, "sensing", "rounds", out.rounds);
    out.snr_db = read<double>(s, "sensing", "snr_db", out.snr_db);
    out.p01 = read<double>(s, "sensing", "p01", out.p01);
    out.p10 = read<double>(s, "sensing", "p10", out.p10);
    out.pfa_target = read<double>(s, "sensing", "pfa_target", out.pfa_target);
    out.attack = read<std::string>(s, "sensing", "attack", out.attack);
    out.consensus = read<std::string>(s, "sensing", "consensus", out.consensus);
    out.topology = read<std::string>(s, "sensing", "topology", out.topology);
    out.connect_prob =
        read<double>(s, "sensing", "connect_prob", out.connect_prob);
    out.attention_temp =
        read<double>(s, "sensing", "attention_temp", out.attention_temp);
    out.calibration_trials =
        read<int>(s, "sensing", "calibration_trials", out.calibration_trials);
    attack_from_string(out.attack);  // validate early
    if (out.consensus != "trimmed" && out.consensus != "naive_mean")
      throw ConfigError("sensing.consensus: expected trimmed or naive_mean");
    if (out.topology != "full" && out.topology != "erdos_renyi")
      throw ConfigError("sensing.topology: expected full or erdos_renyi");
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, "optimizer",
               {"leak_weight", "power_weight", "leak_cap", "power_budget",
                "gamma0", "alpha", "rho", "t_max", "tol", "accelerate",
                "closed_form_equalizer", "epsilon"});
    auto& out = cfg.optimizer;
    out.leak_weight = read<double>(o, "optimizer", "leak_weight", out.leak_weight);
    out.power_weight =
        read<double>(o, "optimizer", "power_weight", out.power_weight);
    out.leak_cap = read<double>(o, "optimizer", "leak_cap", out.leak_cap);
    out.power_budget =
        read<double>(o, "optimizer", "power_budget", out.power_budget);
    out.gamma0 = read<double>(o, "optimizer", "gamma0", out.gamma0);
    out.alpha = read<double>(o, "optimizer", "alpha", out.alpha);
    out.rho = read<double>(o, "optimizer", "rho", out.rho);
    out.t_max = read<int>(o, "optimizer", "t_max", out.t_max);
    out.tol = read<double>(o, "optimizer", "tol", out.tol);
    out.accelerate = read<bool>(o, "optimizer", "accelerate", out.accelerate);
    out.closed_form_equalizer = read<bool>(o, "optimizer",
                                           "closed_form_equalizer",
                                           out.closed_form_equalizer);
    out.epsilon = read<double>(o, "optimizer", "epsilon", out.epsilon);
  }
  if (j.contains("bo")) {
    const auto& b = j.at("bo");
    check_keys(b, "bo",
               {"budget", "n_init", "n_mc", "acquisition", "latent_dim",
                "jl_epsilon", "box", "candidates", "refine_steps"});
    auto& out = cfg.bo;
    out.budget = read<int>(b, "bo", "budget", out.budget);
    out.n_init = read<int>(b, "bo", "n_init", out.n_init);
    out.n_mc = read<int>(b, "bo", "n_mc", out.n_mc);
    out.acquisition = read<std::string>(b, "bo", "acquisition", out.acquisition);
    out.latent_dim = read<int>(b, "bo", "latent_dim", out.latent_dim);
    out.jl_epsilon = read<double>(b, "bo", "jl_epsilon", out.jl_epsilon);
    out.box = read<double>(b, "bo", "box", out.box);
    out.candidates = read<int>(b, "bo", "candidates", out.candidates);
    out.refine_steps = read<int>(b, "bo", "refine_steps", out.refine_steps);
    acquisition_from_string(out.acquisition);
  }
  cfg.sweep = read<std::vector<double>>(j, "config", "sweep", {});
  cfg.trials = read<int>(j, "config", "trials", cfg.trials);
  if (cfg.trials < 1) throw ConfigError("config.trials: must be >= 1");
  cfg.seed = read<std::uint64_t>(j, "config", "seed", cfg.seed);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return parse_config(j);
}

struct ResultRow {
  std::string experiment;
  std::string sweep_name;
  double sweep_value = 0.0;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
};

struct RawRow {
  std::string sweep_name;
  double sweep_value = 0.0;
  std::string metric;
  int trial = 0;
  double value = 0.0;
};

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::vector<RawRow> raw;
};

/// Detection metrics from paired (decision, truth) records.
inline std::pair<double, double> metric_detection(
    const std::vector<std::pair<bool, bool>>& decided_vs_truth) {
  int h1 = 0, h0 = 0, hit = 0, alarm = 0;
  for (auto [decided, truth] : decided_vs_truth) {
    if (truth) {
      ++h1;
      hit += decided ? 1 : 0;
    } else {
      ++h0;
      alarm += decided ? 1 : 0;
    }
  }
  if (h1 == 0 || h0 == 0)
    throw std::invalid_argument("metric_detection: need both hypotheses");
  return {static_cast<double>(hit) / h1, static_cast<double>(alarm) / h0};
}

/// Harvested-to-leaked power efficiency in equalizer-free mode. Returns
/// +inf when nothing leaks; callers exclude those samples from averages.
inline double metric_wpt_zeta(const ChannelSet& cs, const Design& d) {
  const double p_tx = d.precoder.squaredNorm();
  if (p_tx <= 0.0) throw std::invalid_argument("metric_wpt_zeta: zero transmit power");
  auto eff = effective_channels(cs, d.theta);
  double harvested = 0.0;
  for (Eigen::Index k = 0; k < eff.users.cols(); ++k)
    harvested += (eff.users.col(k).adjoint() * d.precoder).squaredNorm();
  const double leaked = leakage_signal_power(eff, d.precoder).total;
  if (leaked <= 0.0) return std::numeric_limits<double>::infinity();
  return harvested / (p_tx * leaked);
}

namespace expdetail {

struct Accumulator {
  double sum = 0.0;
  double sumsq = 0.0;
  int count = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
  double stderr_() const {
    if (count < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, sumsq / count - m * m);
    return std::sqrt(var / count);
  }
};

inline std::vector<int> byzantine_tail(const Dims& dims) {
  std::vector<int> byz;
  const int total = dims.users + dims.eavesdroppers;
  for (int k = dims.users; k < total; ++k) byz.push_back(k);
  return byz;
}

inline SensingScenario make_scenario(const ExperimentConfig& cfg,
                                     double snr_linear, int samples,
                                     Rng& rng) {
  SensingScenario sc;
  const auto byz = byzantine_tail(cfg.dims);
  const int users = cfg.dims.users + cfg.dims.eavesdroppers;
  if (cfg.sensing.topology == "full") {
    sc.topo = Topology::fully_connected(users, byz);
  } else {
    sc.topo = Topology::erdos_renyi(users, cfg.sensing.connect_prob, byz,
                                    2 * cfg.dims.eavesdroppers + 1, rng);
  }
  sc.fusion.attention_temp = cfg.sensing.attention_temp;
  sc.fusion.rounds = cfg.sensing.rounds;
  sc.fusion.trim_count =
      cfg.sensing.consensus == "trimmed" ? cfg.dims.eavesdroppers : 0;
  sc.attack = attack_from_string(cfg.sensing.attack);
  sc.rule = cfg.sensing.consensus == "trimmed" ? ConsensusRule::trimmed
                                               : ConsensusRule::naive_mean;
  sc.samples = samples;
  sc.bs_samples = samples;
  sc.snr_linear = snr_linear;
  sc.noise_var = 1.0;
  sc.prior_h1 = cfg.sensing.p01 / (cfg.sensing.p01 + cfg.sensing.p10);
  return sc;
}

inline std::uint64_t stream(const ExperimentConfig& cfg, const char* phase,
                            std::uint64_t sweep_idx, std::uint64_t trial) {
  return derive_seed(cfg.seed, hash_string(cfg.experiment.c_str()) ^
                                   hash_string(phase),
                     sweep_idx, trial);
}

/// Fused-belief curves over rounds for `trials` independent frames.
inline std::vector<std::vector<double>> fused_curves(
    const ExperimentConfig& cfg, const SensingScenario& base, bool pu_active,
    const char* phase, std::uint64_t sweep_idx, int trials) {
  std::vector<std::vector<double>> curves(trials);
  for (int i = 0; i < trials; ++i) {
    Rng rng(stream(cfg, phase, sweep_idx, static_cast<std::uint64_t>(i)));
    SensingScenario sc = base;
    if (cfg.sensing.topology != "full") {
      Rng topo_rng(stream(cfg, "topology", sweep_idx,
                          static_cast<std::uint64_t>(i)));
      sc = make_scenario(cfg, base.snr_linear, base.samples, topo_rng);
    }
    curves[i] = run_sensing_trial(sc, pu_active, rng).fused_by_round;
  }
  return curves;
}

inline double quantile_threshold(std::vector<double> values, double pfa) {
  std::sort(values.begin(), values.end());
  const auto n = static_cast<long long>(values.size());
  const auto idx = static_cast<size_t>(
      std::min<long long>(n - 1, std::llround((1.0 - pfa) * n)));
  return values[idx];
}

/// Sum MSE of a (theta, precoder) pair on the true channels with the
/// receiver's own MMSE equalizer.
inline double evaluate_sum_mse(const ChannelSet& cs, const Design& d) {
  auto eff = effective_channels(cs, d.theta);
  const VecC c = mmse_equalizer(eff, d.precoder, cs.noise_user);
  return sum_mse(eff, d.precoder, c, cs.noise_user);
}

struct MethodDesigns {
  Design full;
  Design partial;
  Design bo;
  std::vector<IterRecord> full_trace;
  std::vector<BoRecord> bo_trace;
};

/// Runs the three design methods for one channel realization: exact
/// alternating, noisy-gradient alternating, and CSI-free latent BO.
inline MethodDesigns optimize_methods(const ExperimentConfig& cfg,
                                      const ChannelSet& cs, const Weights& w,
                                      std::uint64_t sweep_idx, int trial,
                                      bool wpt_mode) {
  MethodDesigns out;
  StepSchedule sched{cfg.optimizer.gamma0, cfg.optimizer.alpha};
  DualState dual0{0.0, 0.0, cfg.optimizer.rho};
  AltOptions opt;
  opt.max_iters = cfg.optimizer.t_max;
  opt.tol = cfg.optimizer.tol;
  opt.accelerate = cfg.optimizer.accelerate;
  opt.closed_form_equalizer = cfg.optimizer.closed_form_equalizer;
  opt.fix_equalizer = wpt_mode;

  Rng init_rng(stream(cfg, "init", sweep_idx, trial));
  Design init = initial_design(cs, w, init_rng);
  if (wpt_mode) init.equalizer = VecC::Ones(cfg.dims.users);

  auto full = run_alternating(cs, init, w, sched, dual0, opt);
  out.full = full.design;
  out.full_trace = full.trace.iters;

  AltOptions noisy = opt;
  noisy.epsilon = cfg.optimizer.epsilon;
  Rng noise_rng(stream(cfg, "csi-noise", sweep_idx, trial));
  out.partial = run_alternating(cs, init, w, sched, dual0, noisy, &noise_rng).design;

  BoConfig bo_cfg;
  bo_cfg.budget = cfg.bo.budget;
  bo_cfg.n_init = cfg.bo.n_init;
  bo_cfg.acquisition = acquisition_from_string(cfg.bo.acquisition);
  bo_cfg.box = cfg.bo.box;
  bo_cfg.candidates = cfg.bo.candidates;
  bo_cfg.refine_steps = cfg.bo.refine_steps;
  const int feature_dim =
      2 * cfg.dims.elements + 2 * cfg.dims.antennas * cfg.dims.users +
      2 * cfg.dims.users;
  const int latent_dim =
      cfg.bo.latent_dim > 0
          ? cfg.bo.latent_dim
          : std::min(feature_dim, jl_dimension(cfg.bo.jl_epsilon, cfg.bo.budget));
  auto bo = run_bo_design(cfg.dims, w, latent_dim, cfg.bo.n_mc, bo_cfg,
                          stream(cfg, "bo", sweep_idx, trial));
  out.bo = bo.design;
  if (wpt_mode) out.bo.equalizer = VecC::Ones(cfg.dims.users);
  out.bo_trace = bo.bo.trace;
  return out;
}

}  // namespace expdetail

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  using namespace expdetail;
  ExperimentOutput out;
  auto push = [&](const std::string& sweep_name, double sweep_value,
                  const std::string& metric, const Accumulator& acc) {
    out.rows.push_back({cfg.experiment, sweep_name, sweep_value, metric,
                        acc.mean(), acc.stderr_(), acc.count, cfg.seed});
  };
  auto push_raw = [&](const std::string& sweep_name, double sweep_value,
                      const std::string& metric, int trial, double value) {
    out.raw.push_back({sweep_name, sweep_value, metric, trial, value});
  };

  if (cfg.experiment == "pd_vs_snr") {
    std::vector<double> snrs = cfg.sweep;
    if (snrs.empty()) snrs = {-10.0, -5.0, 0.0, 5.0};
    std::vector<int> j_list = cfg.sensing.samples_list;
    if (j_list.empty()) j_list = {cfg.sensing.samples};
    for (size_t si = 0; si < snrs.size(); ++si) {
      const double snr_linear = std::pow(10.0, snrs[si] / 10.0);
      for (int samples : j_list) {
        Rng topo_rng(stream(cfg, "topology", si, samples));
        SensingScenario sc = make_scenario(cfg, snr_linear, samples, topo_rng);
        const std::uint64_t sweep_key =
            si * 1000 + static_cast<std::uint64_t>(samples);
        auto calib = fused_curves(cfg, sc, false, "calibrate", sweep_key,
                                  cfg.sensing.calibration_trials);
        std::vector<double> finals(calib.size());
        for (size_t i = 0; i < calib.size(); ++i) finals[i] = calib[i].back();
        const double tau =
            quantile_threshold(finals, cfg.sensing.pfa_target);

        Accumulator pd, pfa;
        auto h1 = fused_curves(cfg, sc, true, "h1", sweep_key, cfg.trials);
        for (size_t i = 0; i < h1.size(); ++i) {
          const double v = decide(h1[i].back(), tau) ? 1.0 : 0.0;
          pd.add(v);
          push_raw("snr_db", snrs[si],
                   "pd_j" + std::to_string(samples), static_cast<int>(i), v);
        }
        auto h0 = fused_curves(cfg, sc, false, "h0", sweep_key, cfg.trials);
        for (size_t i = 0; i < h0.size(); ++i)
          pfa.add(decide(h0[i].back(), tau) ? 1.0 : 0.0);
        const std::string suffix = "_j" + std::to_string(samples);
        push("snr_db", snrs[si], "pd" + suffix, pd);
        push("snr_db", snrs[si], "pfa" + suffix, pfa);
        ResultRow tau_row{cfg.experiment, "snr_db", snrs[si],
                          "tau" + suffix,  tau,      0.0,
                          1,              cfg.seed};
        out.rows.push_back(tau_row);
      }
    }
    return out;
  }

  if (cfg.experiment == "pd_vs_iter") {
    const double snr_linear = std::pow(10.0, cfg.sensing.snr_db / 10.0);
    Rng topo_rng(stream(cfg, "topology", 0, 0));
    SensingScenario sc =
        make_scenario(cfg, snr_linear, cfg.sensing.samples, topo_rng);
    auto calib = fused_curves(cfg, sc, false, "calibrate", 0,
                              cfg.sensing.calibration_trials);
    auto h1 = fused_curves(cfg, sc, true, "h1", 0, cfg.trials);
    for (int round = 0; round < cfg.sensing.rounds; ++round) {
      std::vector<double> h0_vals(calib.size());
      for (size_t i = 0; i < calib.size(); ++i) h0_vals[i] = calib[i][round];
      const double tau = quantile_threshold(h0_vals, cfg.sensing.pfa_target);
      Accumulator pd;
      for (size_t i = 0; i < h1.size(); ++i) {
        const double v = decide(h1[i][round], tau) ? 1.0 : 0.0;
        pd.add(v);
        push_raw("round", round + 1, "pd", static_cast<int>(i), v);
      }
      push("round", round + 1, "pd", pd);
    }
    return out;
  }

  if (cfg.experiment == "roc") {
    std::vector<double> targets = cfg.sweep;
    if (targets.empty())
      targets = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    const double snr_linear = std::pow(10.0, cfg.sensing.snr_db / 10.0);
    Rng topo_rng(stream(cfg, "topology", 0, 0));
    SensingScenario sc =
        make_scenario(cfg, snr_linear, cfg.sensing.samples, topo_rng);
    auto calib = fused_curves(cfg, sc, false, "calibrate", 0,
                              cfg.sensing.calibration_trials);
    std::vector<double> calib_finals(calib.size());
    for (size_t i = 0; i < calib.size(); ++i) calib_finals[i] = calib[i].back();
    auto h1 = fused_curves(cfg, sc, true, "h1", 0, cfg.trials);
    auto h0 = fused_curves(cfg, sc, false, "h0", 0, cfg.trials);
    for (double target : targets) {
      const double tau = quantile_threshold(calib_finals, target);
      Accumulator pd, pfa;
      for (auto& curve : h1) pd.add(decide(curve.back(), tau) ? 1.0 : 0.0);
      for (auto& curve : h0) pfa.add(decide(curve.back(), tau) ? 1.0 : 0.0);
      push("pfa_target", target, "pd", pd);
      push("pfa_target", target, "pfa", pfa);
    }
    return out;
  }

  // transmission experiments share the weight bundle
  Weights base_w{cfg.optimizer.leak_weight, cfg.optimizer.power_weight,
                 cfg.optimizer.leak_cap, cfg.optimizer.power_budget};

  if (cfg.experiment == "mse_vs_iter") {
    base_w.validate();
    std::vector<Accumulator> alt_mse(cfg.optimizer.t_max);
    std::vector<Accumulator> bo_best(cfg.bo.budget);
    for (int trial = 0; trial < cfg.trials; ++trial) {
      Rng ch_rng(stream(cfg, "channels", 0, trial));
      ChannelSet cs = sample_channels(cfg.dims, 1.0, 1.0, ch_rng);
      AltOptions opt;
      opt.max_iters = cfg.optimizer.t_max;
      opt.tol = 0.0;  // keep the full trace for curve averaging
      StepSchedule sched{cfg.optimizer.gamma0, cfg.optimizer.alpha};
      DualState dual0{0.0, 0.0, cfg.optimizer.rho};
      Rng init_rng(stream(cfg, "init", 0, trial));
      Design init = initial_design(cs, base_w, init_rng);
      auto res = run_alternating(cs, init, base_w, sched, dual0, opt);
      for (int t = 0; t < cfg.optimizer.t_max; ++t) {
        const auto& iters = res.trace.iters;
        const auto& rec = iters[std::min<size_t>(t, iters.size() - 1)];
        alt_mse[t].add(rec.sum_mse);
        push_raw("iteration", t + 1, "alt_sum_mse", trial, rec.sum_mse);
      }
      const int feature_dim =
          2 * cfg.dims.elements + 2 * cfg.dims.antennas * cfg.dims.users +
          2 * cfg.dims.users;
      const int latent_dim =
          cfg.bo.latent_dim > 0
              ? cfg.bo.latent_dim
              : std::min(feature_dim,
                         jl_dimension(cfg.bo.jl_epsilon, cfg.bo.budget));
      BoConfig bo_cfg;
      bo_cfg.budget = cfg.bo.budget;
      bo_cfg.n_init = cfg.bo.n_init;
      bo_cfg.acquisition = acquisition_from_string(cfg.bo.acquisition);
      bo_cfg.box = cfg.bo.box;
      bo_cfg.candidates = cfg.bo.candidates;
      bo_cfg.refine_steps = cfg.bo.refine_steps;
      auto bo = run_bo_design(cfg.dims, base_w, latent_dim, cfg.bo.n_mc,
                              bo_cfg, stream(cfg, "bo", 0, trial));
      for (int t = 0; t < cfg.bo.budget; ++t) {
        const double v = bo.bo.trace[t].best_feasible;
        if (std::isfinite(v)) {
          bo_best[t].add(v);
          push_raw("iteration", t + 1, "bo_best_objective", trial, v);
        }
      }
    }
    for (int t = 0; t < cfg.optimizer.t_max; ++t)
      push("iteration", t + 1, "alt_sum_mse", alt_mse[t]);
    for (int t = 0; t < cfg.bo.budget; ++t)
      if (bo_best[t].count > 0)
        push("iteration", t + 1, "bo_best_objective", bo_best[t]);
    return out;
  }

  if (cfg.experiment == "mse_vs_snr" || cfg.experiment == "wpt_zeta" ||
      cfg.experiment == "bo_vs_alt") {
    const bool wpt = cfg.experiment == "wpt_zeta";
    std::vector<double> snrs = cfg.sweep;
    if (snrs.empty()) snrs = {0.0};
    for (size_t si = 0; si < snrs.size(); ++si) {
      Weights w = base_w;
      // transmit SNR enters through the power budget (unit noise)
      w.power_budget =
          cfg.optimizer.power_budget * std::pow(10.0, snrs[si] / 10.0);
      w.validate();
      Accumulator mse_full, mse_partial, mse_bo;
      Accumulator zeta_full, zeta_partial, zeta_bo;
      Accumulator leak_full, leak_partial, leak_bo;
      int zeta_excluded = 0;
      for (int trial = 0; trial < cfg.trials; ++trial) {
        Rng ch_rng(stream(cfg, "channels", si, trial));
        ChannelSet cs = sample_channels(cfg.dims, 1.0, 1.0, ch_rng);
        auto methods = optimize_methods(cfg, cs, w, si, trial, wpt);
        struct Entry {
          const char* name;
          const Design* design;
          Accumulator* mse;
          Accumulator* zeta;
          Accumulator* leak;
        };
        const Entry entries[] = {
            {"full", &methods.full, &mse_full, &zeta_full, &leak_full},
            {"partial", &methods.partial, &mse_partial, &zeta_partial,
             &leak_partial},
            {"bo", &methods.bo, &mse_bo, &zeta_bo, &leak_bo}};
        for (const auto& e : entries) {
          const double mse = evaluate_sum_mse(cs, *e.design);
          const double leak = leakage_signal_power(cs, *e.design).total;
          e.mse->add(mse);
          e.leak->add(leak);
          push_raw("snr_db", snrs[si], std::string("sum_mse_") + e.name, trial,
                   mse);
          if (wpt) {
            const double z = metric_wpt_zeta(cs, *e.design);
            if (std::isfinite(z)) {
              e.zeta->add(z);
              push_raw("snr_db", snrs[si], std::string("zeta_") + e.name,
                       trial, z);
            } else {
              ++zeta_excluded;
            }
          }
        }
      }
      push("snr_db", snrs[si], "sum_mse_full", mse_full);
      push("snr_db", snrs[si], "sum_mse_partial", mse_partial);
      push("snr_db", snrs[si], "sum_mse_bo", mse_bo);
      push("snr_db", snrs[si], "leakage_full", leak_full);
      push("snr_db", snrs[si], "leakage_partial", leak_partial);
      push("snr_db", snrs[si], "leakage_bo", leak_bo);
      if (wpt) {
        push("snr_db", snrs[si], "zeta_full", zeta_full);
        push("snr_db", snrs[si], "zeta_partial", zeta_partial);
        push("snr_db", snrs[si], "zeta_bo", zeta_bo);
        Accumulator excluded;
        excluded.add(static_cast<double>(zeta_excluded));
        push("snr_db", snrs[si], "zeta_excluded", excluded);
      }
    }
    return out;
  }

  throw ConfigError("unhandled experiment kind: " + cfg.experiment);
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline void emit_csv(const std::vector<ResultRow>& rows, std::ostream& os) {
  os << "experiment,sweep,value,metric,mean,stderr,trials,seed\n";
  for (const auto& r : rows)
    os << r.experiment << ',' << r.sweep_name << ','
       << format_number(r.sweep_value) << ',' << r.metric << ','
       << format_number(r.mean) << ',' << format_number(r.stderr_) << ','
       << r.trials << ',' << r.seed << '\n';
}

inline void emit_json(const std::vector<ResultRow>& rows, std::ostream& os) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"experiment", r.experiment},
                   {"sweep", r.sweep_name},
                   {"value", r.sweep_value},
                   {"metric", r.metric},
                   {"mean", r.mean},
                   {"stderr", r.stderr_},
                   {"trials", r.trials},
                   {"seed", r.seed}});
  }
  os << arr.dump(2) << '\n';
}

inline void emit_raw_csv(const std::string& experiment,
                         const std::vector<RawRow>& raw, std::ostream& os) {
  os << "experiment,sweep,value,metric,trial,sample\n";
  for (const auto& r : raw)
    os << experiment << ',' << r.sweep_name << ','
       << format_number(r.sweep_value) << ',' << r.metric << ',' << r.trial
       << ',' << format_number(r.value) << '\n';
}

}  // namespace irsopt
