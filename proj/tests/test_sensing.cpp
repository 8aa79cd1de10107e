#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "irsopt/rng.hpp"
#include "irsopt/sensing.hpp"

using namespace irsopt;

TEST_CASE("energy statistic", "[sensing]") {
  SECTION("per-sample mean approaches the noise variance under the null") {
    Rng rng(1);
    const int samples = 20000;
    const double sigma2 = 2.0;
    double e = energy_statistic(false, samples, 1.0, sigma2, rng);
    // var of |y|^2 for CN(0,s) is s^2, so stderr of the mean is s/sqrt(J)
    double se = sigma2 / std::sqrt(static_cast<double>(samples));
    REQUIRE(std::abs(e / samples - sigma2) < 3.0 * se);
  }
  SECTION("zero SNR makes both hypotheses identical") {
    Rng a(7), b(7);
    REQUIRE(energy_statistic(true, 50, 0.0, 1.0, a) ==
            energy_statistic(false, 50, 0.0, 1.0, b));
  }
  SECTION("seed-fixed call is reproducible") {
    Rng a(9), b(9);
    REQUIRE(energy_statistic(true, 10, 0.5, 1.0, a) ==
            energy_statistic(true, 10, 0.5, 1.0, b));
  }
}

TEST_CASE("log-likelihood ratio", "[sensing]") {
  SECTION("decision boundary at E = 2 ln 2 for J=1, unit SNR") {
    REQUIRE(llr(2.0 * std::log(2.0), 1, 1.0, 1.0) ==
            Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("zero SNR gives zero llr for any energy") {
    REQUIRE(llr(0.0, 5, 0.0, 1.0) == 0.0);
    REQUIRE(llr(123.4, 5, 0.0, 1.0) == 0.0);
  }
  SECTION("KL positivity: mean llr positive under H1, negative under H0") {
    Rng rng(11);
    const int draws = 100000;
    double acc1 = 0.0, acc0 = 0.0;
    for (int i = 0; i < draws; ++i) {
      acc1 += llr(energy_statistic(true, 5, 0.8, 1.0, rng), 5, 0.8, 1.0);
      acc0 += llr(energy_statistic(false, 5, 0.8, 1.0, rng), 5, 0.8, 1.0);
    }
    REQUIRE(acc1 / draws > 0.0);
    REQUIRE(acc0 / draws < 0.0);
  }
}

TEST_CASE("logit update", "[sensing]") {
  Topology topo = Topology::fully_connected(3, {});
  Rng rng(3);
  BeliefState st = init_beliefs(topo, 0.5, Attack::always_one, rng);

  SECTION("zero increment keeps belief at one half") {
    logit_update(st, 0, 0.0);
    REQUIRE(st.belief[0] == Catch::Approx(0.5));
  }
  SECTION("additivity: +x then -x returns to one half") {
    logit_update(st, 0, 2.5);
    logit_update(st, 0, -2.5);
    REQUIRE(st.belief[0] == Catch::Approx(0.5).margin(1e-14));
  }
  SECTION("matches the ratio-form Bayes update on random sequences") {
    Rng r(13);
    double pi = 0.37;
    BeliefState s2 = st;
    s2.logit[1] = logit_of(pi);
    s2.belief[1] = pi;
    for (int i = 0; i < 200; ++i) {
      const double ell = r.normal(0.0, 0.8);
      const double like = std::exp(ell);
      pi = pi * like / (1.0 - pi + pi * like);
      logit_update(s2, 1, ell);
      REQUIRE(std::abs(s2.belief[1] - pi) < 1e-12);
    }
  }
}

TEST_CASE("trimmed consensus rule", "[sensing]") {
  // user 0 with five neighbors 1..5
  Topology topo = Topology::fully_connected(6, {});
  std::vector<double> prev = {0.0, 0.0, 0.4, 0.5, 0.6, 1.0};

  SECTION("drops one from each tail and averages") {
    REQUIRE(consensus_value(0.8, topo, 0, prev, 1) == Catch::Approx(0.5));
  }
  SECTION("is capped by the local belief") {
    REQUIRE(consensus_value(0.3, topo, 0, prev, 1) == Catch::Approx(0.3));
  }
  SECTION("small neighborhoods fall back to the local belief") {
    Topology line;
    line.user_count = 3;
    line.neighbors = {{1, 2}, {0, 2}, {0, 1}};
    line.byzantine = {0, 0, 0};
    std::vector<double> p2 = {0.9, 0.9, 0.9};
    REQUIRE(consensus_value(0.42, line, 0, p2, 1) == 0.42);
  }
  SECTION("trimmed mean stays inside the honest range") {
    Rng rng(17);
    for (int rep = 0; rep < 200; ++rep) {
      const int trim = 1 + static_cast<int>(rng.below(2));
      const int honest = 2 * trim + 1 + static_cast<int>(rng.below(5));
      double lo = rng.uniform(), hi = lo + rng.uniform() * (1.0 - lo);
      std::vector<double> vals;
      for (int i = 0; i < honest; ++i) vals.push_back(rng.uniform(lo, hi));
      for (int i = 0; i < trim; ++i) vals.push_back(rng.uniform());  // attackers
      double m = trimmed_mean(vals, trim);
      REQUIRE(m >= lo - 1e-12);
      REQUIRE(m <= hi + 1e-12);
    }
  }
}

TEST_CASE("sensing round dynamics", "[sensing]") {
  SECTION("symmetry: identical observations give identical shared values") {
    Topology topo = Topology::fully_connected(5, {});
    Rng rng(19);
    BeliefState st = init_beliefs(topo, 0.4, Attack::always_one, rng);
    std::vector<double> energies(5, 7.5);
    run_sensing_round(st, topo, energies, 10, 1.0, 1.0, Attack::always_one, 0, rng);
    for (int k = 1; k < 5; ++k)
      REQUIRE(st.shared[k] == Catch::Approx(st.shared[0]));
  }
  SECTION("cap invariant: honest shared never exceeds own belief") {
    Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
      const int users = 8;
      const int trim = 1;
      Topology topo =
          Topology::erdos_renyi(users, 0.9, {0}, 2 * trim + 1, rng);
      BeliefState st = init_beliefs(topo, 0.4, Attack::always_one, rng);
      std::vector<double> energies(users);
      for (int t = 0; t < 5; ++t) {
        for (auto& e : energies)
          e = energy_statistic(true, 10, 0.5, 1.0, rng);
        run_sensing_round(st, topo, energies, 10, 0.5, 1.0, Attack::always_one,
                          trim, rng);
        for (int k = 0; k < users; ++k)
          if (!topo.byzantine[k])
            REQUIRE(st.shared[k] <= st.belief[k] + 1e-15);
      }
    }
  }
  SECTION("fixed seed reproduces the trajectory") {
    SensingScenario sc;
    sc.topo = Topology::fully_connected(6, {4, 5});
    sc.fusion.trim_count = 2;
    sc.fusion.rounds = 8;
    sc.attack = Attack::inverted;
    Rng a(29), b(29);
    auto ra = run_sensing_trial(sc, true, a);
    auto rb = run_sensing_trial(sc, true, b);
    REQUIRE(ra.fused_by_round == rb.fused_by_round);
  }
  SECTION("beliefs converge to one under sustained activity") {
    // log(1 - pi) should trend down roughly linearly in t
    Topology topo = Topology::fully_connected(4, {});
    Rng rng(31);
    BeliefState st = init_beliefs(topo, 0.4, Attack::always_one, rng);
    std::vector<double> energies(4);
    double early = 0.0, late = 0.0;
    for (int t = 0; t < 40; ++t) {
      for (auto& e : energies) e = energy_statistic(true, 10, 1.0, 1.0, rng);
      run_sensing_round(st, topo, energies, 10, 1.0, 1.0, Attack::always_one, 0,
                        rng);
      double lp = std::log(std::max(1e-300, 1.0 - st.belief[0]));
      if (t == 9) early = lp / (t + 1);
      if (t == 39) late = lp / (t + 1);
    }
    REQUIRE(late < 0.0);
    REQUIRE(late <= early);
  }
}

TEST_CASE("base-station fusion", "[sensing]") {
  FusionParams params;
  params.attention_temp = 0.01;
  params.trim_count = 1;

  SECTION("equal survivor reports pass through") {
    std::vector<double> deltas = {0.0, 0.6, 0.6, 0.6, 1.0};
    REQUIRE(bs_fuse(deltas, 1.0, params) == Catch::Approx(0.6));
  }
  SECTION("min rule caps by the local belief") {
    std::vector<double> deltas = {0.9, 0.9, 0.9, 0.9, 0.9};
    REQUIRE(bs_fuse(deltas, 0.7, params) == Catch::Approx(0.7));
  }
  SECTION("large temperature recovers the arithmetic survivor mean") {
    FusionParams flat = params;
    flat.attention_temp = 1e6;
    std::vector<double> deltas = {0.1, 0.44, 0.5, 0.58, 0.9};
    // survivors after trimming one per tail: 0.44 0.5 0.58
    REQUIRE(std::abs(bs_fuse(deltas, 1.0, flat) - (0.44 + 0.5 + 0.58) / 3.0) <
            1e-9);
  }
  SECTION("fused value stays within the survivor range") {
    Rng rng(37);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> deltas(7);
      for (auto& d : deltas) d = rng.uniform();
      auto sorted = deltas;
      std::sort(sorted.begin(), sorted.end());
      double fused = bs_fuse(deltas, 1.0, params);
      REQUIRE(fused >= sorted[1] - 1e-12);
      REQUIRE(fused <= sorted[5] + 1e-12);
    }
  }
  SECTION("insufficient reports are rejected") {
    std::vector<double> deltas = {0.5, 0.5};
    REQUIRE_THROWS_AS(bs_fuse(deltas, 1.0, params), std::invalid_argument);
  }
}

TEST_CASE("decision thresholding", "[sensing]") {
  REQUIRE(decide(0.5, 0.5));   // boundary inclusive
  REQUIRE_FALSE(decide(0.0, 0.5));
  REQUIRE(decide(1.0, 0.5));
}

TEST_CASE("threshold calibration", "[sensing]") {
  SensingScenario sc;
  sc.topo = Topology::fully_connected(6, {5});
  sc.fusion.trim_count = 1;
  sc.fusion.rounds = 6;
  sc.samples = 8;
  sc.snr_linear = 1.0;

  SECTION("median for a 0.5 target") {
    Rng rng(41);
    double tau = calibrate_threshold(sc, 0.5, 400, rng);
    Rng fresh(42);
    int above = 0;
    for (int i = 0; i < 400; ++i)
      above += run_sensing_trial(sc, false, fresh).fused_final >= tau ? 1 : 0;
    REQUIRE(std::abs(above / 400.0 - 0.5) < 0.08);
  }
  SECTION("smaller target requires a larger threshold") {
    Rng a(43), b(43);
    double tau_loose = calibrate_threshold(sc, 0.2, 1000, a);
    double tau_tight = calibrate_threshold(sc, 0.02, 1000, b);
    REQUIRE(tau_tight >= tau_loose);
  }
  SECTION("rejects too few trials") {
    Rng rng(44);
    REQUIRE_THROWS_AS(calibrate_threshold(sc, 0.001, 100, rng),
                      std::invalid_argument);
  }
}

TEST_CASE("primary-user Markov chain", "[sensing]") {
  SECTION("stationary occupancy matches p01/(p01+p10)") {
    Rng rng(47);
    int state = 0, ones = 0;
    const int steps = 1000000;
    for (int i = 0; i < steps; ++i) {
      state = pu_markov_step(state, 0.2, 0.3, rng);
      ones += state;
    }
    REQUIRE(std::abs(static_cast<double>(ones) / steps - 0.4) < 0.01);
  }
  SECTION("absorbing when p01 = 0") {
    Rng rng(48);
    int state = 0;
    for (int i = 0; i < 100; ++i) state = pu_markov_step(state, 0.0, 0.3, rng);
    REQUIRE(state == 0);
  }
  SECTION("alternates when both probabilities are one") {
    Rng rng(49);
    int state = 0;
    state = pu_markov_step(state, 1.0, 1.0, rng);
    REQUIRE(state == 1);
    state = pu_markov_step(state, 1.0, 1.0, rng);
    REQUIRE(state == 0);
  }
}

TEST_CASE("deviation from the honest mean stays bounded", "[sensing]") {
  // fully-connected graph: honest degree K_H - 1; deviation bound
  // 2*K_B/degree + margin after the transient
  Rng rng(53);
  const int honest = 8, byz = 2;
  std::vector<int> byz_set = {8, 9};
  Topology topo = Topology::fully_connected(honest + byz, byz_set);
  const double bound = 2.0 * byz / (honest - 1) + 0.1;
  for (Attack atk : {Attack::always_one, Attack::always_zero, Attack::inverted,
                     Attack::uniform_random}) {
    SensingScenario sc;
    sc.topo = topo;
    sc.fusion.trim_count = byz;
    sc.fusion.rounds = 30;
    sc.attack = atk;
    sc.samples = 10;
    sc.snr_linear = 1.0;
    BeliefState st = init_beliefs(topo, 0.4, atk, rng);
    std::vector<double> energies(topo.user_count);
    for (int t = 1; t <= 30; ++t) {
      for (auto& e : energies) e = energy_statistic(true, 10, 1.0, 1.0, rng);
      run_sensing_round(st, topo, energies, 10, 1.0, 1.0, atk,
                        sc.fusion.trim_count, rng);
      if (t >= 20) {
        double mean = 0.0;
        for (int k = 0; k < honest; ++k) mean += st.shared[k];
        mean /= honest;
        for (int k = 0; k < honest; ++k)
          REQUIRE(std::abs(st.shared[k] - mean) <= bound);
      }
    }
  }
}
