#include "lfd/kinematics.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "lfd/error.hpp"

namespace lfd {

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double wrap_degrees(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  return r - 180.0;
}

JointAngles JointAngles::from_degrees(const Vec6& raw) {
  Vec6 w;
  for (int i = 0; i < kNumJoints; ++i) w[i] = wrap_degrees(raw[i]);
  return JointAngles(w);
}

JointAngles JointAngles::from_radians(const Vec6& raw) {
  Vec6 d;
  for (int i = 0; i < kNumJoints; ++i) d[i] = rad_to_deg(raw[i]);
  return from_degrees(d);
}

Vec6 JointAngles::radians() const {
  Vec6 r;
  for (int i = 0; i < kNumJoints; ++i) r[i] = deg_to_rad(deg_[i]);
  return r;
}

JointAngles wrap_angles(const Vec6& raw_degrees) { return JointAngles::from_degrees(raw_degrees); }

HomTransform::HomTransform(const Mat3& rotation, const Vec3& translation) : m_(Mat4::Identity()) {
  m_.topLeftCorner<3, 3>() = rotation;
  m_.topRightCorner<3, 1>() = translation;
}

HomTransform HomTransform::from_matrix(const Mat4& m) {
  HomTransform t;
  t.m_ = m;
  t.m_.row(3) << 0.0, 0.0, 0.0, 1.0;
  return t;
}

HomTransform HomTransform::operator*(const HomTransform& rhs) const {
  return from_matrix(m_ * rhs.m_);
}

HomTransform HomTransform::inverse() const {
  const Mat3 rt = rotation().transpose();
  return HomTransform(rt, -rt * translation());
}

DhTable::DhTable(const std::array<DhRow, kNumJoints>& rows) : rows_(rows) {
  for (const auto& r : rows_) {
    if (!std::isfinite(r.a) || !std::isfinite(r.d) || !std::isfinite(r.alpha_deg) ||
        !std::isfinite(r.theta_offset_deg)) {
      throw Error(ErrorCode::kConfigError, "DH table contains a non-finite value");
    }
  }
}

DhTable DhTable::ur3() {
  return DhTable({{
      {0.0, 0.1519, 90.0, 0.0},
      {-0.24365, 0.0, 0.0, 0.0},
      {-0.21325, 0.0, 0.0, 0.0},
      {0.0, 0.11235, 90.0, 0.0},
      {0.0, 0.08535, -90.0, 0.0},
      {0.0, 0.0819, 0.0, 0.0},
  }});
}

DhTable DhTable::parse(std::istream& in) {
  std::array<DhRow, kNumJoints> rows{};
  int count = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    DhRow row;
    if (!(ls >> row.a)) continue;  // blank line
    if (!(ls >> row.d >> row.alpha_deg >> row.theta_offset_deg)) {
      throw Error(ErrorCode::kParseError,
                  "DH line " + std::to_string(line_no) + ": expected four numbers");
    }
    std::string extra;
    if (ls >> extra) {
      throw Error(ErrorCode::kParseError,
                  "DH line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
    }
    if (count == kNumJoints) {
      throw Error(ErrorCode::kParseError, "DH table has more than 6 rows");
    }
    rows[static_cast<size_t>(count++)] = row;
  }
  if (count != kNumJoints) {
    throw Error(ErrorCode::kParseError,
                "DH table needs exactly 6 rows, got " + std::to_string(count));
  }
  return DhTable(rows);
}

DhTable DhTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open DH table " + path.string());
  return parse(in);
}

Mat4 dh_link_transform(const DhRow& row, double q_deg) {
  const double theta = deg_to_rad(q_deg + row.theta_offset_deg);
  const double alpha = deg_to_rad(row.alpha_deg);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  Mat4 t;
  t << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0.0, sa, ca, row.d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

std::array<Mat4, kNumJoints + 1> chain_frames(const DhTable& dh, const JointAngles& q) {
  std::array<Mat4, kNumJoints + 1> frames;
  frames[0] = Mat4::Identity();
  for (int i = 0; i < kNumJoints; ++i) {
    frames[static_cast<size_t>(i + 1)] =
        frames[static_cast<size_t>(i)] * dh_link_transform(dh.row(i), q[i]);
  }
  return frames;
}

HomTransform forward_kinematics(const DhTable& dh, const JointAngles& q) {
  return HomTransform::from_matrix(chain_frames(dh, q)[kNumJoints]);
}

Mat6 jacobian(const DhTable& dh, const JointAngles& q) {
  const auto frames = chain_frames(dh, q);
  const Vec3 tip = frames[kNumJoints].topRightCorner<3, 1>();
  Mat6 j;
  for (int i = 0; i < kNumJoints; ++i) {
    // Joint i rotates about the z axis of frame i.
    const Mat4& f = frames[static_cast<size_t>(i)];
    const Vec3 axis = f.block<3, 1>(0, 2);
    const Vec3 origin = f.topRightCorner<3, 1>();
    j.block<3, 1>(0, i) = axis.cross(tip - origin);
    j.block<3, 1>(3, i) = axis;
  }
  return j;
}

HomTransform pose_to_transform(const Vec3& position, const Vec3& x_axis, const Vec3& y_axis,
                               const Vec3& z_axis) {
  constexpr double kTol = 1e-6;
  Mat3 r;
  r.col(0) = x_axis;
  r.col(1) = y_axis;
  r.col(2) = z_axis;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!r.allFinite() || !position.allFinite() || ortho > kTol ||
      std::abs(r.determinant() - 1.0) > kTol) {
    throw Error(ErrorCode::kNonOrthonormalAxes,
                "axes are not an orthonormal right-handed triad (deviation " +
                    std::to_string(ortho) + ", det " + std::to_string(r.determinant()) + ")");
  }
  return HomTransform(r, position);
}

double transform_error(const HomTransform& a, const HomTransform& b) {
  return (a.matrix() - b.matrix()).norm();
}

Vec3 rotation_log(const Mat3& r) {
  const Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * vee.norm();
  const double cos_theta = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-12) return 0.5 * vee;
  if (cos_theta > 0.0) return vee * (theta / (2.0 * sin_theta));

  // Obtuse angles: recover the axis from the symmetric part, which stays
  // well conditioned as theta approaches pi.
  const Mat3 b = 0.5 * (r + r.transpose()) - cos_theta * Mat3::Identity();
  const double one_minus_cos = 1.0 - cos_theta;
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (b(i, i) > b(k, k)) k = i;
  }
  Vec3 axis;
  const double nk = std::sqrt(std::max(b(k, k) / one_minus_cos, 0.0));
  for (int i = 0; i < 3; ++i) {
    axis[i] = (i == k) ? nk : b(k, i) / (one_minus_cos * nk);
  }
  axis.normalize();
  if (axis.dot(vee) < 0.0) axis = -axis;
  return theta * axis;
}

Vec6 angle_axis_twist(const HomTransform& current, const HomTransform& target) {
  Vec6 g;
  g.head<3>() = target.translation() - current.translation();
  g.tail<3>() = rotation_log(target.rotation() * current.rotation().transpose());
  return g;
}

void IkSettings::validate() const {
  if (!(e_max > 0.0)) throw Error(ErrorCode::kConfigError, "IK e_max must be > 0");
  if (max_iterations < 1) throw Error(ErrorCode::kConfigError, "IK max_iterations must be >= 1");
  if (!(step_scale > 0.0 && step_scale <= 1.0)) {
    throw Error(ErrorCode::kConfigError, "IK step_scale must lie in (0, 1]");
  }
  if (singular_damping < 0.0) throw Error(ErrorCode::kConfigError, "IK damping must be >= 0");
}

IkSolution solve_ik(const DhTable& dh, const JointAngles& q0, const HomTransform& target,
                    const IkSettings& settings) {
  settings.validate();
  IkSolution sol{q0, 0, 0.0};
  HomTransform current = forward_kinematics(dh, sol.q);
  sol.error = transform_error(target, current);

  while (sol.error > settings.e_max) {
    if (sol.iterations >= settings.max_iterations) {
      throw Error(ErrorCode::kNotConverged,
                  "IK did not converge in " + std::to_string(settings.max_iterations) +
                      " iterations (error " + std::to_string(sol.error) + ")");
    }
    const Mat6 j = jacobian(dh, sol.q);
    const Vec6 g = angle_axis_twist(current, target);

    Eigen::JacobiSVD<Mat6> svd(j);
    const auto& sv = svd.singularValues();
    const double cond = sv[5] > 0.0 ? sv[0] / sv[5] : std::numeric_limits<double>::infinity();
    Vec6 dq;
    if (cond <= settings.singularity_threshold) {
      dq = j.partialPivLu().solve(g);
    } else {
      const Mat6 jjt = j * j.transpose() + settings.singular_damping * Mat6::Identity();
      dq = j.transpose() * jjt.ldlt().solve(g);
    }
    sol.q = JointAngles::from_radians(sol.q.radians() + settings.step_scale * dq);
    ++sol.iterations;
    current = forward_kinematics(dh, sol.q);
    sol.error = transform_error(target, current);
    if (!std::isfinite(sol.error)) {
      throw Error(ErrorCode::kNotConverged, "IK diverged to a non-finite error");
    }
  }
  return sol;
}

}  // namespace lfd
