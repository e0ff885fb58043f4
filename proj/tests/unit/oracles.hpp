#pragma once
// Independent reference computations used by the unit tests. Nothing here
// calls into the code under test except for plain data types.

#include <Eigen/Geometry>

#include <cmath>
#include <functional>
#include <numbers>

#include "lfd/kinematics.hpp"

namespace oracle {

inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Textbook standard DH: Rz(theta) Tz(d) Tx(a) Rx(alpha), built from
// Eigen's own transform primitives.
inline Eigen::Matrix4d dh_fk(const lfd::DhTable& dh, const lfd::Vec6& q_deg) {
  Eigen::Affine3d t = Eigen::Affine3d::Identity();
  for (int i = 0; i < 6; ++i) {
    const auto& r = dh.row(i);
    t = t * Eigen::AngleAxisd(rad(q_deg[i] + r.theta_offset_deg), Eigen::Vector3d::UnitZ()) *
        Eigen::Translation3d(0, 0, r.d) * Eigen::Translation3d(r.a, 0, 0) *
        Eigen::AngleAxisd(rad(r.alpha_deg), Eigen::Vector3d::UnitX());
  }
  return t.matrix();
}

// Central finite difference of a scalar function along every coordinate of x.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||): the gradient-check metric.
inline double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double den = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / den;
}

}  // namespace oracle
