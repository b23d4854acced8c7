#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace geoclip {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Argument violations throw std::invalid_argument; IO and format problems
// throw std::runtime_error. Messages carry a "module:" prefix.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_io(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace geoclip
