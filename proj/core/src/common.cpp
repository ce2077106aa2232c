#include "hitchin/common.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/QR>

namespace hitchin {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::at(std::uint64_t counter) const {
  std::uint64_t key = splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL));
  return splitmix64(key + counter * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::normal() {
  // Box-Muller on two fresh draws; the sine branch is discarded so every normal costs
  // exactly two counters.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

cd CounterRng::complex_normal() {
  const double s = std::sqrt(0.5);
  double re = normal();
  double im = normal();
  return {s * re, s * im};
}

Mat random_complex_matrix(CounterRng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.complex_normal();
  return m;
}

Mat random_unitary(CounterRng& rng, int r) {
  Eigen::MatrixXcd z = random_complex_matrix(rng, r, r);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  Eigen::MatrixXcd rr = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix the column phases so the distribution is Haar.
  for (int j = 0; j < r; ++j) {
    double a = std::abs(rr(j, j));
    if (a > 0) q.col(j) *= rr(j, j) / a;
  }
  return q;
}

Mat random_hermitian_pd(CounterRng& rng, int r, double spread) {
  Mat u = random_unitary(rng, r);
  Mat d = Mat::Zero(r, r);
  double half = 0.5 * std::log(spread);
  for (int i = 0; i < r; ++i) d(i, i) = std::exp(rng.uniform(-half, half));
  Mat h = u * d * u.adjoint();
  return 0.5 * (h + h.adjoint());
}

}  // namespace hitchin
