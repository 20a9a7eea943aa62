#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace scmpc {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kGravity = -9.81;

/// Raised when a caller breaks a documented precondition (mismatched sizes,
/// non-positive step, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid scenario / gait / controller configuration. `key()` names the
/// offending entry when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, std::string key = {})
      : std::runtime_error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// The plant produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, double t)
      : std::runtime_error(msg), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace scmpc
