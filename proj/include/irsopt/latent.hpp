#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "irsopt/channel.hpp"
#include "irsopt/rng.hpp"

namespace irsopt {

/// Latent dimension sufficient for (1 +- eps) distance preservation of a
/// point set of the given size.
inline int jl_dimension(double eps, int point_count) {
  return static_cast<int>(
      std::ceil(8.0 / (eps * eps) * std::log(static_cast<double>(point_count))));
}

/// Random linear embedding of designs. The feature map places phases on the
/// unit circle and splits precoder/equalizer into real and imaginary parts;
/// the decoder is the least-norm linear preimage followed by block
/// restructuring (phases from atan2, precoder rescaled into the power
/// budget).
struct LatentCodec {
  Dims dims;
  int latent_dim = 0;
  double power_budget = 1.0;
  Eigen::MatrixXd projection;  // latent_dim x feature_dim, N(0, 1/latent_dim)
  Eigen::MatrixXd preimage;    // feature_dim x latent_dim

  int feature_dim() const {
    return 2 * dims.elements + 2 * dims.antennas * dims.users + 2 * dims.users;
  }
};

inline LatentCodec make_codec(const Dims& dims, int latent_dim,
                              double power_budget, std::uint64_t seed) {
  dims.validate();
  if (latent_dim < 1) throw std::invalid_argument("make_codec: latent_dim >= 1");
  LatentCodec codec;
  codec.dims = dims;
  codec.latent_dim = latent_dim;
  codec.power_budget = power_budget;
  const int dim = codec.feature_dim();
  if (latent_dim > dim)
    throw std::invalid_argument("make_codec: latent_dim exceeds feature dim");
  Rng rng(seed);
  codec.projection.resize(latent_dim, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (int r = 0; r < latent_dim; ++r)
    for (int c = 0; c < dim; ++c) codec.projection(r, c) = rng.normal() * scale;
  const Eigen::MatrixXd gram = codec.projection * codec.projection.transpose();
  codec.preimage =
      codec.projection.transpose() *
      gram.ldlt().solve(Eigen::MatrixXd::Identity(latent_dim, latent_dim));
  return codec;
}

inline VecR feature_map(const Dims& dims, const Design& d) {
  const int elements = dims.elements;
  const int wsize = dims.antennas * dims.users;
  VecR f(2 * elements + 2 * wsize + 2 * dims.users);
  for (int n = 0; n < elements; ++n) {
    f(n) = std::cos(d.theta(n));
    f(elements + n) = std::sin(d.theta(n));
  }
  int off = 2 * elements;
  for (int i = 0; i < wsize; ++i) {
    f(off + i) = d.precoder.data()[i].real();
    f(off + wsize + i) = d.precoder.data()[i].imag();
  }
  off += 2 * wsize;
  for (int k = 0; k < dims.users; ++k) {
    f(off + k) = d.equalizer(k).real();
    f(off + dims.users + k) = d.equalizer(k).imag();
  }
  return f;
}

inline VecR encode(const LatentCodec& codec, const Design& d) {
  return codec.projection * feature_map(codec.dims, d);
}

inline Design decode(const LatentCodec& codec, const VecR& z) {
  if (z.size() != codec.latent_dim)
    throw std::invalid_argument("decode: latent size mismatch");
  const VecR v = codec.preimage * z;
  const Dims& dims = codec.dims;
  const int elements = dims.elements;
  const int wsize = dims.antennas * dims.users;

  Design d;
  d.theta.resize(elements);
  for (int n = 0; n < elements; ++n) {
    const double c = v(n), s = v(elements + n);
    d.theta(n) = (c == 0.0 && s == 0.0) ? 0.0 : wrap_phase(std::atan2(s, c));
  }
  int off = 2 * elements;
  d.precoder.resize(dims.antennas, dims.users);
  for (int i = 0; i < wsize; ++i)
    d.precoder.data()[i] = cplx(v(off + i), v(off + wsize + i));
  const double power = d.precoder.squaredNorm();
  if (power > codec.power_budget)
    d.precoder *= std::sqrt(codec.power_budget / power);
  off += 2 * wsize;
  d.equalizer.resize(dims.users);
  for (int k = 0; k < dims.users; ++k)
    d.equalizer(k) = cplx(v(off + k), v(off + dims.users + k));
  return d;
}

}  // namespace irsopt
