// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace thzris {

using cd = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using rvec = Eigen::VectorXd;
using rmat = Eigen::MatrixXd;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = std::numbers::pi;
inline constexpr cd kJ{0.0, 1.0};

// Scenario or parameter values that can never be valid.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Coincident points or colocated anchors.
struct degenerate_geometry : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// AoA and AoD rays that do not intersect.
struct parallel_rays : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace thzris
