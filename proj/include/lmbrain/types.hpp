#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lmbrain {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// All pipeline math runs in double; files may carry float32.
using Matrix = Mat<double>;
using Vector = Vec<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct SingularError : Error {
  using Error::Error;
};
struct RangeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};

struct FormatError : Error {
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::uint64_t byte_offset;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

// Matrix invariant: every entry finite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!all_finite(m)) throw DimensionError(std::string(what) + ": non-finite entries");
}

}  // namespace lmbrain
