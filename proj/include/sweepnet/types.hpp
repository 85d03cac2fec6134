#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sweepnet {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A network description that violates a structural invariant.
class InvalidModel : public Error {
 public:
  using Error::Error;
};

// Evaluation requested exactly at a coupled pole of the level function.
class PoleError : public Error {
 public:
  using Error::Error;
};

// The time stepper lost unitarity or could not reach the requested accuracy.
class PropagationError : public Error {
 public:
  using Error::Error;
};

// Adaptive quadrature did not converge; carries the last error estimate.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double estimate)
      : Error(what), estimate_(estimate) {}
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

}  // namespace sweepnet
