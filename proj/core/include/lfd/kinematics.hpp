#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <filesystem>
#include <iosfwd>

namespace lfd {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr int kNumJoints = 6;

double deg_to_rad(double deg);
double rad_to_deg(double rad);

// Maps one angle (degrees) into [-180, 180), congruent mod 360.
double wrap_degrees(double deg);

// Six revolute joint angles in degrees, always wrapped into [-180, 180].
class JointAngles {
 public:
  JointAngles() : deg_(Vec6::Zero()) {}

  static JointAngles from_degrees(const Vec6& raw);
  static JointAngles from_radians(const Vec6& raw);

  const Vec6& degrees() const { return deg_; }
  Vec6 radians() const;
  double operator[](int i) const { return deg_[i]; }

  bool operator==(const JointAngles& other) const { return deg_ == other.deg_; }

 private:
  explicit JointAngles(const Vec6& wrapped) : deg_(wrapped) {}
  Vec6 deg_;
};

JointAngles wrap_angles(const Vec6& raw_degrees);

// Rigid transform with an orthonormal, right-handed rotation block.
class HomTransform {
 public:
  HomTransform() : m_(Mat4::Identity()) {}
  HomTransform(const Mat3& rotation, const Vec3& translation);

  // Unchecked: callers are responsible for the rotation invariant.
  static HomTransform from_matrix(const Mat4& m);

  const Mat4& matrix() const { return m_; }
  Mat3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

  HomTransform operator*(const HomTransform& rhs) const;
  Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }
  HomTransform inverse() const;

 private:
  Mat4 m_;
};

struct DhRow {
  double a = 0.0;             // m
  double d = 0.0;             // m
  double alpha_deg = 0.0;
  double theta_offset_deg = 0.0;
};

// Standard (distal) Denavit-Hartenberg table for a 6R chain:
// T_i = Rz(theta_i) Tz(d_i) Tx(a_i) Rx(alpha_i).
class DhTable {
 public:
  explicit DhTable(const std::array<DhRow, kNumJoints>& rows);

  static DhTable ur3();
  // Plain text, one row per joint: "a d alpha theta_offset". '#' starts a comment.
  static DhTable parse(std::istream& in);
  static DhTable load(const std::filesystem::path& path);

  const DhRow& row(int i) const { return rows_[static_cast<size_t>(i)]; }
  const std::array<DhRow, kNumJoints>& rows() const { return rows_; }

 private:
  std::array<DhRow, kNumJoints> rows_;
};

// Per-joint transform for row `i` at joint angle `q_deg`.
Mat4 dh_link_transform(const DhRow& row, double q_deg);

// Frames 0..6 in the base frame (frame 0 is identity).
std::array<Mat4, kNumJoints + 1> chain_frames(const DhTable& dh, const JointAngles& q);

HomTransform forward_kinematics(const DhTable& dh, const JointAngles& q);

// Geometric Jacobian w.r.t. joint rates in rad/s. Rows 0-2: linear velocity of
// the end-effector origin, rows 3-5: angular velocity, both in the base frame.
Mat6 jacobian(const DhTable& dh, const JointAngles& q);

// Builds a transform whose rotation columns are (x, y, z). Throws
// NonOrthonormalAxes unless the axes are orthonormal and right-handed (1e-6).
HomTransform pose_to_transform(const Vec3& position, const Vec3& x_axis, const Vec3& y_axis,
                               const Vec3& z_axis);

// Frobenius norm of the matrix difference.
double transform_error(const HomTransform& a, const HomTransform& b);

// (target.p - current.p, angle-axis vector of R_target * R_current^T).
Vec6 angle_axis_twist(const HomTransform& current, const HomTransform& target);

// Angle-axis vector (radians) of a rotation matrix. At angle pi the axis sign
// is fixed by the largest diagonal element, ties broken by lowest index.
Vec3 rotation_log(const Mat3& r);

struct IkSettings {
  double e_max = 1e-4;
  int max_iterations = 200;
  double step_scale = 0.5;
  double singular_damping = 1e-6;
  double singularity_threshold = 1e6;  // condition number

  void validate() const;
};

struct IkSolution {
  JointAngles q;
  int iterations = 0;
  double error = 0.0;
};

// Gauss-Newton IK on the angle-axis residual. Throws NotConverged when
// max_iterations is exhausted; the caller may retry with another seed.
IkSolution solve_ik(const DhTable& dh, const JointAngles& q0, const HomTransform& target,
                    const IkSettings& settings = {});

}  // namespace lfd
