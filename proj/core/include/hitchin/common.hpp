#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>

namespace hitchin {

using cd = std::complex<double>;

// Matrices are row-major so a site's r*r block in a flat field buffer maps directly.
// The fixed capacity keeps small temporaries on the stack; 16 is the tensor-product rank cap.
inline constexpr int kMaxRank = 16;
using Mat = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor, kMaxRank, kMaxRank>;
using MatMap = Eigen::Map<Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything the numerics reject at run time; the CLI maps these to exit status 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class InvalidDegreeError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IntegrabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotInHitchinBaseError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateSpectrumError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularGaugeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RankOverflowError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoSpectralDataError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Counter-based generator: draw k of stream s is splitmix64(seed, s, k), so any draw can be
// reproduced without replaying the ones before it.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return at(counter_++); }
  std::uint64_t at(std::uint64_t counter) const;
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Standard complex Gaussian: E|z|^2 = 1.
  cd complex_normal();
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

Mat random_complex_matrix(CounterRng& rng, int rows, int cols);
Mat random_unitary(CounterRng& rng, int r);
// Positive-definite Hermitian with condition number bounded by roughly `spread`.
Mat random_hermitian_pd(CounterRng& rng, int r, double spread = 4.0);

}  // namespace hitchin
