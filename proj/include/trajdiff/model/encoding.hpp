#pragma once

#include <cmath>
#include <vector>

#include "trajdiff/core.hpp"

namespace trajdiff::model {

enum class Axis { kLon = 0, kLat = 1 };

/// Sinusoidal encoding of position n: d/2 sines followed by d/2 cosines with
/// frequencies 10^{-4j/(d/2)}, j = 0..d/2-1. `printed_sign` flips the exponent
/// to +4j/(d/2).
inline std::vector<double> pe_1d(double n, int d, bool printed_sign = false) {
  if (d <= 0 || d % 2 != 0) throw ContractError("pe_1d: dimension must be positive and even");
  const int half = d / 2;
  std::vector<double> out(static_cast<std::size_t>(d));
  for (int j = 0; j < half; ++j) {
    const double expo = 4.0 * j / half;
    const double w = std::pow(10.0, printed_sign ? expo : -expo);
    out[static_cast<std::size_t>(j)] = std::sin(w * n);
    out[static_cast<std::size_t>(half + j)] = std::cos(w * n);
  }
  return out;
}

/// [pe_1d(axis id, d/2), pe_1d(n, d/2)], axis id 0 for longitude, 1 for latitude.
inline std::vector<double> pe_2d(double n, int d, Axis axis, bool printed_sign = false) {
  if (d <= 0 || d % 4 != 0) throw ContractError("pe_2d: dimension must be divisible by 4");
  auto out = pe_1d(static_cast<double>(static_cast<int>(axis)), d / 2, printed_sign);
  const auto pos = pe_1d(n, d / 2, printed_sign);
  out.insert(out.end(), pos.begin(), pos.end());
  return out;
}

/// Timestep bank fed to the timestep MLP: cosines then sines at
/// frequencies exp(-ln(10000) j / (d/2)).
inline std::vector<double> timestep_sinusoid(int t, int d) {
  const int half = d / 2;
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < half; ++j) {
    const double f = std::exp(-std::log(10000.0) * j / half);
    out[static_cast<std::size_t>(j)] = std::cos(t * f);
    out[static_cast<std::size_t>(half + j)] = std::sin(t * f);
  }
  return out;
}

}  // namespace trajdiff::model
