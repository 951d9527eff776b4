#pragma once

#include <array>

namespace stp {

// Gauss-Legendre rule of degree 16 on [-1, 1].
struct GaussLegendre16 {
  std::array<double, 16> nodes;
  std::array<double, 16> weights;
};

const GaussLegendre16& gauss_legendre16();

}  // namespace stp
