#pragma once

#include <stdexcept>
#include <string>

namespace dgp {

/// Invalid shapes, counts or option values supplied by the caller.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization or solve failed, or produced a non-finite/non-positive
/// quantity that the algorithm cannot continue from.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double jitter = 0.0)
      : std::runtime_error(what), jitter_(jitter) {}

  /// Largest diagonal jitter tried before giving up (0 if not applicable).
  double jitter() const noexcept { return jitter_; }

 private:
  double jitter_;
};

}  // namespace dgp
