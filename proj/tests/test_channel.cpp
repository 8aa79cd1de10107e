#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "irsopt/channel.hpp"
#include "irsopt/rng.hpp"

using namespace irsopt;

namespace {

ChannelSet random_channels(const Dims& d, std::uint64_t seed) {
  Rng rng(seed);
  return sample_channels(d, 1.0, 1.0, rng);
}

Design random_design(const Dims& d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Design x;
  x.theta.resize(d.elements);
  for (int n = 0; n < d.elements; ++n) x.theta(n) = rng.uniform(0.0, two_pi);
  x.precoder.resize(d.antennas, d.users);
  for (int c = 0; c < d.users; ++c)
    for (int r = 0; r < d.antennas; ++r) x.precoder(r, c) = rng.cnormal(scale);
  x.equalizer.resize(d.users);
  for (int k = 0; k < d.users; ++k) x.equalizer(k) = rng.cnormal(scale);
  return x;
}

// Scalar scenario used by several trivial cases: all channels and the
// precoder equal to one, zero phase, unit noise.
struct ScalarCase {
  ChannelSet cs;
  Design d;
  ScalarCase() {
    cs.bs_irs = MatC::Ones(1, 1);
    cs.irs_user = {VecC::Ones(1)};
    cs.noise_user = {1.0};
    d.theta = VecR::Zero(1);
    d.precoder = MatC::Ones(1, 1);
    d.equalizer = VecC::Ones(1);
  }
};

}  // namespace

TEST_CASE("sample_channels is deterministic under a fixed seed", "[channel]") {
  Dims d{4, 8, 2, 1};
  ChannelSet a = random_channels(d, 42);
  ChannelSet b = random_channels(d, 42);
  REQUIRE(a.bs_irs == b.bs_irs);
  for (int k = 0; k < d.users; ++k) REQUIRE(a.irs_user[k] == b.irs_user[k]);
  for (int e = 0; e < d.eavesdroppers; ++e) REQUIRE(a.irs_eav[e] == b.irs_eav[e]);
}

TEST_CASE("sample_channels draws unit-variance complex Gaussians", "[channel]") {
  // 10^4 entries: sample mean of |entry|^2 should be 1.0 +- 0.05
  Dims d{10, 1000, 1, 0};
  ChannelSet cs = random_channels(d, 7);
  double acc = 0.0;
  for (int c = 0; c < d.antennas; ++c)
    for (int r = 0; r < d.elements; ++r) acc += std::norm(cs.bs_irs(r, c));
  double mean = acc / (d.antennas * d.elements);
  REQUIRE(mean == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("sample_channels scalar dimension contract", "[channel]") {
  Dims d{1, 1, 1, 0};
  ChannelSet cs = random_channels(d, 3);
  REQUIRE(cs.bs_irs.rows() == 1);
  REQUIRE(cs.bs_irs.cols() == 1);
  REQUIRE(cs.irs_user.size() == 1);
  REQUIRE(cs.irs_user[0].size() == 1);
  REQUIRE(cs.irs_eav.empty());
}

TEST_CASE("effective channel scalar and phase cases", "[channel]") {
  ChannelSet cs;
  cs.bs_irs = MatC::Ones(1, 1);
  cs.irs_user = {VecC::Ones(1)};
  cs.noise_user = {1.0};

  VecR theta = VecR::Zero(1);
  auto eff = effective_channels(cs, theta);
  REQUIRE(std::abs(eff.users(0, 0) - cplx(1.0, 0.0)) < 1e-15);

  theta(0) = std::numbers::pi;
  eff = effective_channels(cs, theta);
  REQUIRE(std::abs(eff.users(0, 0) - cplx(-1.0, 0.0)) < 1e-12);
}

TEST_CASE("effective channel matches direct summation oracle", "[channel]") {
  // column k of H_eff is sum_n conj(H[n,m]) e^{-j theta_n} h_k[n]
  Dims d{2, 4, 2, 1};
  ChannelSet cs = random_channels(d, 11);
  Design x = random_design(d, 12);
  auto eff = effective_channels(cs, x.theta);
  for (int k = 0; k < d.users; ++k) {
    for (int m = 0; m < d.antennas; ++m) {
      cplx acc = 0.0;
      for (int n = 0; n < d.elements; ++n)
        acc += std::conj(cs.bs_irs(n, m)) * std::polar(1.0, -x.theta(n)) *
               cs.irs_user[k](n);
      REQUIRE(std::abs(eff.users.col(k)(m) - acc) < 1e-12);
    }
  }
  for (int m = 0; m < d.antennas; ++m) {
    cplx acc = 0.0;
    for (int n = 0; n < d.elements; ++n)
      acc += std::conj(cs.bs_irs(n, m)) * std::polar(1.0, -x.theta(n)) *
             cs.irs_eav[0](n);
    REQUIRE(std::abs(eff.eavs[0](m) - acc) < 1e-12);
  }
}

TEST_CASE("mse scalar cases", "[channel]") {
  ScalarCase s;
  // h_eff = 1, w = 1, sigma^2 = 1, c = 1: MSE = 2 - 2 + 1 = 1
  REQUIRE(mse_k(s.cs, s.d, 0) == Catch::Approx(1.0));
  // MMSE scalar: c = 0.5 gives MSE = 0.5, SINR = 1
  s.d.equalizer(0) = 0.5;
  REQUIRE(mse_k(s.cs, s.d, 0) == Catch::Approx(0.5));
  REQUIRE(sinr_k(s.cs, s.d, 0) == Catch::Approx(1.0));
}

TEST_CASE("mse matches simulated-symbol Monte Carlo on random instances",
          "[channel][slow]") {
  Dims d{3, 6, 2, 0};
  for (int inst = 0; inst < 10; ++inst) {
    ChannelSet cs = random_channels(d, 100 + inst);
    Design x = random_design(d, 200 + inst, 0.5);
    auto eff = effective_channels(cs, x.theta);
    const int k = inst % d.users;
    const double analytic =
        mse_user(eff, x.precoder, x.equalizer, cs.noise_user[k], k);

    Rng rng(300 + inst);
    const Eigen::RowVectorXcd row = eff.users.col(k).adjoint() * x.precoder;
    const int draws = 100000;
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      cplx y = 0.0;
      cplx sk = 0.0;
      for (int j = 0; j < d.users; ++j) {
        cplx s = rng.cnormal();
        if (j == k) sk = s;
        y += row(j) * s;
      }
      y += rng.cnormal(cs.noise_user[k]);
      double err = std::norm(x.equalizer(k) * y - sk);
      acc += err;
      acc2 += err * err;
    }
    const double mean = acc / draws;
    const double var = acc2 / draws - mean * mean;
    const double stderr_mc = std::sqrt(var / draws);
    REQUIRE(std::abs(mean - analytic) < 3.0 * stderr_mc + 1e-12);
  }
}

TEST_CASE("leakage signal power", "[channel]") {
  SECTION("no eavesdroppers gives zero total") {
    Dims d{2, 3, 1, 0};
    ChannelSet cs = random_channels(d, 21);
    Design x = random_design(d, 22);
    auto leak = leakage_signal_power(cs, x);
    REQUIRE(leak.per_eav.empty());
    REQUIRE(leak.total == 0.0);
  }
  SECTION("scalar unit case") {
    ScalarCase s;
    s.cs.irs_eav = {VecC::Ones(1)};
    s.cs.noise_eav = {1.0};
    auto leak = leakage_signal_power(s.cs, s.d);
    REQUIRE(leak.per_eav[0] == Catch::Approx(1.0));
    REQUIRE(leak.total == Catch::Approx(1.0));
  }
  SECTION("matches per-term modulus-squared summation oracle") {
    Dims d{3, 5, 2, 2};
    ChannelSet cs = random_channels(d, 23);
    Design x = random_design(d, 24);
    auto leak = leakage_signal_power(cs, x);
    double total = 0.0;
    for (int e = 0; e < d.eavesdroppers; ++e) {
      double acc = 0.0;
      for (int k = 0; k < d.users; ++k) {
        cplx term = 0.0;
        for (int n = 0; n < d.elements; ++n)
          for (int m = 0; m < d.antennas; ++m)
            term += std::conj(cs.irs_eav[e](n)) * std::polar(1.0, x.theta(n)) *
                    cs.bs_irs(n, m) * x.precoder(m, k);
        acc += std::norm(term);
      }
      REQUIRE(leak.per_eav[e] == Catch::Approx(acc));
      REQUIRE(leak.per_eav[e] >= 0.0);
      total += acc;
    }
    REQUIRE(leak.total == Catch::Approx(total));
  }
}

TEST_CASE("sinr edge cases", "[channel]") {
  ScalarCase s;
  SECTION("zero precoder column gives zero sinr") {
    s.d.precoder(0, 0) = 0.0;
    REQUIRE(sinr_k(s.cs, s.d, 0) == 0.0);
  }
  SECTION("matches formula from effective channels") {
    Dims d{3, 4, 3, 0};
    ChannelSet cs = random_channels(d, 31);
    Design x = random_design(d, 32);
    auto eff = effective_channels(cs, x.theta);
    for (int k = 0; k < d.users; ++k) {
      double desired = std::norm((eff.users.col(k).adjoint() * x.precoder)(k));
      double denom = cs.noise_user[k];
      for (int j = 0; j < d.users; ++j)
        if (j != k)
          denom += std::norm((eff.users.col(k).adjoint() * x.precoder)(j));
      REQUIRE(sinr_k(cs, x, k) == Catch::Approx(desired / denom));
    }
  }
}

TEST_CASE("mmse equalizer closed form", "[channel]") {
  SECTION("scalar unit case gives 1/2") {
    ScalarCase s;
    REQUIRE(std::abs(mmse_equalizer(s.cs, s.d)(0) - cplx(0.5, 0.0)) < 1e-15);
  }
  SECTION("desired 1, interference 1, noise 1 gives 1/3") {
    // two users, orthogonal-ish construction with h^H w_k = 1, h^H w_j = 1
    ChannelSet cs;
    cs.bs_irs = MatC::Identity(2, 2);
    cs.irs_user = {VecC(2), VecC(2)};
    cs.irs_user[0] << 1.0, 0.0;
    cs.irs_user[1] << 0.0, 1.0;
    cs.noise_user = {1.0, 1.0};
    Design x;
    x.theta = VecR::Zero(2);
    x.precoder = MatC::Ones(2, 2);
    x.equalizer = VecC::Ones(2);
    VecC c = mmse_equalizer(cs, x);
    REQUIRE(std::abs(c(0) - cplx(1.0 / 3.0, 0.0)) < 1e-14);
  }
  SECTION("is a local minimum against 100 perturbed equalizers") {
    Dims d{3, 5, 2, 0};
    ChannelSet cs = random_channels(d, 41);
    Design x = random_design(d, 42);
    x.equalizer = mmse_equalizer(cs, x);
    const double base = mse_k(cs, x, 0);
    Rng rng(43);
    for (int i = 0; i < 100; ++i) {
      Design y = x;
      y.equalizer(0) += rng.cnormal(0.01);
      REQUIRE(mse_k(cs, y, 0) >= base - 1e-12);
    }
  }
}

TEST_CASE("mmse identity: MSE at c* equals 1/(1+SINR)", "[channel]") {
  Dims d{4, 8, 2, 1};
  for (int inst = 0; inst < 25; ++inst) {
    ChannelSet cs = random_channels(d, 500 + inst);
    Design x = random_design(d, 600 + inst);
    x.equalizer = mmse_equalizer(cs, x);
    for (int k = 0; k < d.users; ++k) {
      double mse = mse_k(cs, x, k);
      double target = 1.0 / (1.0 + sinr_k(cs, x, k));
      REQUIRE(std::abs(mse - target) <= 1e-10 * std::max(1.0, std::abs(target)));
    }
  }
}

TEST_CASE("objective composition", "[channel]") {
  Dims d{3, 4, 2, 1};
  ChannelSet cs = random_channels(d, 51);
  Design x = random_design(d, 52);

  SECTION("zero weights reduce to sum MSE") {
    Weights w{0.0, 0.0, 1.0, 1.0};
    double sum = mse_k(cs, x, 0) + mse_k(cs, x, 1);
    REQUIRE(objective(cs, x, w) == Catch::Approx(sum));
  }
  SECTION("scalar unit case composes to 3") {
    ScalarCase s;
    s.cs.irs_eav = {VecC::Ones(1)};
    s.cs.noise_eav = {1.0};
    Weights w{1.0, 1.0, 2.0, 2.0};
    // MSE = 1, leakage = 1, ||W||^2 = 1
    REQUIRE(objective(s.cs, s.d, w) == Catch::Approx(3.0));
  }
  SECTION("matches independent recomposition") {
    Weights w{0.7, 0.3, 1.0, 2.0};
    double expect = mse_k(cs, x, 0) + mse_k(cs, x, 1) +
                    w.leak_weight * leakage_signal_power(cs, x).total +
                    w.power_weight * x.precoder.squaredNorm();
    REQUIRE(objective(cs, x, w) == Catch::Approx(expect));
  }
}

TEST_CASE("constraint values", "[channel]") {
  Dims d{3, 4, 2, 1};
  SECTION("zero design") {
    ChannelSet cs = random_channels(d, 61);
    Design x = Design::zero(d);
    Weights w{1.0, 1.0, 1.5, 2.5};
    auto g = constraint_values(cs, x, w);
    REQUIRE(g.leak == Catch::Approx(-1.5));
    REQUIRE(g.power == Catch::Approx(-2.5));
    REQUIRE(g.feasible());
  }
  SECTION("scalar unit case") {
    ScalarCase s;
    s.cs.irs_eav = {VecC::Ones(1)};
    s.cs.noise_eav = {1.0};
    Weights w{1.0, 1.0, 2.0, 2.0};
    auto g = constraint_values(s.cs, s.d, w);
    REQUIRE(g.leak == Catch::Approx(-1.0));
    REQUIRE(g.power == Catch::Approx(-1.0));
  }
  SECTION("matches direct norms oracle") {
    ChannelSet cs = random_channels(d, 62);
    Design x = random_design(d, 63);
    Weights w{1.0, 1.0, 0.8, 1.7};
    auto g = constraint_values(cs, x, w);
    REQUIRE(g.leak ==
            Catch::Approx(leakage_signal_power(cs, x).total - w.leak_cap));
    REQUIRE(g.power == Catch::Approx(x.precoder.squaredNorm() - w.power_budget));
  }
}

TEST_CASE("phase coefficients are exactly unit modulus", "[channel]") {
  Rng rng(71);
  VecR theta(64);
  for (int n = 0; n < 64; ++n) theta(n) = rng.uniform(-100.0, 100.0);
  VecC phi = phase_coeffs(theta);
  for (int n = 0; n < 64; ++n) REQUIRE(std::abs(std::abs(phi(n)) - 1.0) == 0.0);
}

TEST_CASE("powers are invariant to a common unit phase on the links",
          "[channel]") {
  Dims d{3, 5, 2, 1};
  ChannelSet cs = random_channels(d, 81);
  Design x = random_design(d, 82);
  x.equalizer = mmse_equalizer(cs, x);

  ChannelSet rotated = cs;
  const cplx u = std::polar(1.0, 1.234);
  for (auto& h : rotated.irs_user) h *= u;
  for (auto& g : rotated.irs_eav) g *= u;

  auto leak_a = leakage_signal_power(cs, x);
  auto leak_b = leakage_signal_power(rotated, x);
  REQUIRE(std::abs(leak_a.total - leak_b.total) < 1e-12);
  for (int k = 0; k < d.users; ++k)
    REQUIRE(std::abs(sinr_k(cs, x, k) - sinr_k(rotated, x, k)) < 1e-12);
}
