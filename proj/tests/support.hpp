#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hitchin/higgs.hpp"
#include "hitchin/lattice.hpp"

namespace hitchin::testing {

inline lattice::Domain torus(int n, int N, double L = 2 * std::numbers::pi) {
  return lattice::Domain::torus(n, std::vector<int>(2 * n, N), std::vector<double>(2 * n, L));
}

inline lattice::Domain patch(int n, int N, double a = 1.0) {
  return lattice::Domain::patch(n, std::vector<int>(2 * n, N), std::vector<double>(2 * n, a));
}

inline int dz(const lattice::FormBasis& b, int j) { return b.index(1u << j, 0u); }
inline int dzbar(const lattice::FormBasis& b, int j) { return b.index(0u, 1u << j); }

// Constant phi = sum_j diag(values[j]) dz_j.
inline higgs::EndoFormField diagonal_phi(const lattice::Domain& dom, const std::vector<std::vector<cd>>& values) {
  const int r = static_cast<int>(values.front().size());
  higgs::EndoFormField phi(dom, r, 1, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s)
    for (int j = 0; j < dom.complex_dim(); ++j)
      for (int i = 0; i < r; ++i) phi.at(s, dz(phi.basis(), j))(i, i) = values[j][i];
  return phi;
}

// Hitchin section phi = [[0, 1], [q, 0]] dz on a one-dimensional domain.
template <class Q>
higgs::EndoFormField companion_phi(const lattice::Domain& dom, Q q) {
  higgs::EndoFormField phi(dom, 2, 1, 0);
  for (std::size_t s = 0; s < dom.sites(); ++s) {
    phi.at(s, 0)(0, 1) = 1.0;
    phi.at(s, 0)(1, 0) = q(dom.z(s, 0));
  }
  return phi;
}

}  // namespace hitchin::testing
