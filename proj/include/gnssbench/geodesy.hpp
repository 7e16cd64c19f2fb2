#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "gnssbench/error.hpp"

namespace gnssbench {

// =============================================================================
// WGS84 constants
// =============================================================================

namespace wgs84 {
inline constexpr double a = 6378137.0;
inline constexpr double f = 1.0 / 298.257223563;
inline constexpr double b = a * (1.0 - f);
inline constexpr double e2 = f * (2.0 - f);
} // namespace wgs84

inline constexpr double deg_to_rad(double deg) {
  return deg * (std::numbers::pi / 180.0);
}
inline constexpr double rad_to_deg(double rad) {
  return rad * (180.0 / std::numbers::pi);
}

/// Wraps an angle into [-pi, pi).
inline double wrap_pi(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped < 0.0)
    wrapped += two_pi;
  return wrapped - std::numbers::pi;
}

// =============================================================================
// Domain types
// =============================================================================

/// WGS84 geodetic position. Angles in degrees (file convention), altitude in
/// metres above the ellipsoid.
struct GeodeticPosition {
  double latitude = 0.0;
  double longitude = 0.0;
  double altitude = 0.0;

  bool operator==(const GeodeticPosition &) const = default;
};

inline bool is_valid(const GeodeticPosition &p) {
  return std::isfinite(p.latitude) && std::isfinite(p.longitude) &&
         std::isfinite(p.altitude) && p.latitude >= -90.0 &&
         p.latitude <= 90.0 && p.longitude >= -180.0 && p.longitude < 180.0 &&
         p.altitude >= -1000.0 && p.altitude <= 100000.0;
}

inline void require_valid(const GeodeticPosition &p) {
  if (!is_valid(p)) {
    std::ostringstream os;
    os.precision(17);
    os << "invalid geodetic position (" << p.latitude << ", " << p.longitude
       << ", " << p.altitude << ")";
    throw Error(ErrorKind::InvalidCoordinate, os.str());
  }
}

/// Vector in a local North-East-Down frame [m].
struct LocalVector {
  double north = 0.0;
  double east = 0.0;
  double down = 0.0;

  Eigen::Vector3d vec() const { return {north, east, down}; }
  static LocalVector from(const Eigen::Vector3d &v) { return {v.x(), v.y(), v.z()}; }
  double norm() const { return vec().norm(); }

  bool operator==(const LocalVector &) const = default;
};

inline LocalVector operator+(const LocalVector &l, const LocalVector &r) {
  return {l.north + r.north, l.east + r.east, l.down + r.down};
}
inline LocalVector operator-(const LocalVector &l, const LocalVector &r) {
  return {l.north - r.north, l.east - r.east, l.down - r.down};
}
inline LocalVector operator*(double s, const LocalVector &v) {
  return {s * v.north, s * v.east, s * v.down};
}

/// 3-2-1 (yaw, pitch, roll) attitude of the body relative to NED [rad].
struct EulerAttitude {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  bool operator==(const EulerAttitude &) const = default;
};

/// Row-major 3x3 matrix. Rotations produced by euler_to_rotation are
/// orthonormal; the raw alignment block is not required to be.
struct RotationMatrix3 {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  static RotationMatrix3 identity() { return {}; }

  double operator()(int row, int col) const { return m(row, col); }

  bool is_orthonormal(double tol = 1e-9) const {
    if (!m.allFinite())
      return false;
    const Eigen::Matrix3d gram = m.transpose() * m;
    return (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(m.determinant() - 1.0) <= tol;
  }
};

using EcefVector = Eigen::Vector3d;

// =============================================================================
// Geodetic <-> ECEF <-> NED
// =============================================================================

namespace detail {

template <class T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T> using Mat3 = Eigen::Matrix<T, 3, 3>;

template <class T> T radians(double deg) {
  return static_cast<T>(deg) * (std::numbers::pi_v<T> / T(180));
}

template <class T> Vec3<T> geodetic_to_ecef(const GeodeticPosition &p) {
  require_valid(p);
  const T lat = radians<T>(p.latitude);
  const T lon = radians<T>(p.longitude);
  const T sin_lat = std::sin(lat);
  const T cos_lat = std::cos(lat);
  const T e2 = static_cast<T>(wgs84::e2);
  const T n = static_cast<T>(wgs84::a) / std::sqrt(T(1) - e2 * sin_lat * sin_lat);
  const T h = static_cast<T>(p.altitude);
  return {(n + h) * cos_lat * std::cos(lon), (n + h) * cos_lat * std::sin(lon),
          (n * (T(1) - e2) + h) * sin_lat};
}

template <class T> GeodeticPosition ecef_to_geodetic(const Vec3<T> &x) {
  if (!x.allFinite())
    throw Error(ErrorKind::InvalidCoordinate, "non-finite ECEF vector");
  const T a = static_cast<T>(wgs84::a);
  const T e2 = static_cast<T>(wgs84::e2);
  const T eps = std::numeric_limits<T>::epsilon();
  const T p = std::hypot(x.x(), x.y());
  T lat = std::atan2(x.z(), p * (T(1) - e2));
  for (int it = 0; it < 30; ++it) {
    const T s = std::sin(lat);
    const T n = a / std::sqrt(T(1) - e2 * s * s);
    const T next = std::atan2(x.z() + e2 * n * s, p);
    const bool done = std::abs(next - lat) < 4 * eps;
    lat = next;
    if (done)
      break;
  }
  const T s = std::sin(lat);
  const T c = std::cos(lat);
  const T n = a / std::sqrt(T(1) - e2 * s * s);
  const T h = p * c + x.z() * s - n * (T(1) - e2 * s * s);
  const T to_deg = T(180) / std::numbers::pi_v<T>;
  double lon = static_cast<double>(std::atan2(x.y(), x.x()) * to_deg);
  if (lon >= 180.0)
    lon -= 360.0;
  return {static_cast<double>(lat * to_deg), lon, static_cast<double>(h)};
}

template <class T> Mat3<T> ecef_to_ned_rotation(const GeodeticPosition &anchor) {
  const T lat = radians<T>(anchor.latitude);
  const T lon = radians<T>(anchor.longitude);
  const T sl = std::sin(lat), cl = std::cos(lat);
  const T so = std::sin(lon), co = std::cos(lon);
  Mat3<T> r;
  r << -sl * co, -sl * so, cl,
       -so,       co,      T(0),
       -cl * co, -cl * so, -sl;
  return r;
}

} // namespace detail

inline EcefVector geodetic_to_ecef(const GeodeticPosition &p) {
  return detail::geodetic_to_ecef<double>(p);
}

/// Fixed-point iteration on geodetic latitude; converges to machine precision
/// in a handful of steps for terrestrial heights.
inline GeodeticPosition ecef_to_geodetic(const EcefVector &x) {
  return detail::ecef_to_geodetic<double>(x);
}

/// Rotation taking ECEF difference vectors into NED at the given anchor.
inline Eigen::Matrix3d ecef_to_ned_rotation(const GeodeticPosition &anchor) {
  return detail::ecef_to_ned_rotation<double>(anchor);
}

inline LocalVector ecef_to_ned(const EcefVector &p, const GeodeticPosition &anchor) {
  if (!p.allFinite())
    throw Error(ErrorKind::InvalidCoordinate, "non-finite ECEF vector");
  const EcefVector origin = geodetic_to_ecef(anchor);
  return LocalVector::from(ecef_to_ned_rotation(anchor) * (p - origin));
}

inline EcefVector ned_to_ecef(const LocalVector &v, const GeodeticPosition &anchor) {
  const EcefVector origin = geodetic_to_ecef(anchor);
  return origin + ecef_to_ned_rotation(anchor).transpose() * v.vec();
}

/// Precomputed anchor frame for converting many positions. ECEF coordinates
/// sit near 6.4e6 m where a double's spacing is ~1e-9 m, so the frame works
/// in long double to keep local vectors well below that.
class LocalFrame {
public:
  explicit LocalFrame(const GeodeticPosition &anchor)
      : anchor_(anchor), origin_(detail::geodetic_to_ecef<long double>(anchor)),
        rotation_(detail::ecef_to_ned_rotation<long double>(anchor)) {}

  const GeodeticPosition &anchor() const { return anchor_; }

  LocalVector to_ned(const GeodeticPosition &p) const {
    const detail::Vec3<long double> v =
        rotation_ * (detail::geodetic_to_ecef<long double>(p) - origin_);
    return {static_cast<double>(v.x()), static_cast<double>(v.y()), static_cast<double>(v.z())};
  }
  GeodeticPosition to_geodetic(const LocalVector &v) const {
    return detail::ecef_to_geodetic<long double>(
        origin_ + rotation_.transpose() * v.vec().cast<long double>());
  }

private:
  GeodeticPosition anchor_;
  detail::Vec3<long double> origin_;
  detail::Mat3<long double> rotation_;
};

// =============================================================================
// 3-2-1 Euler rotations
// =============================================================================

inline Eigen::Matrix3d rotation_x(double roll) {
  const double c = std::cos(roll), s = std::sin(roll);
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return r;
}

inline Eigen::Matrix3d rotation_y(double pitch) {
  const double c = std::cos(pitch), s = std::sin(pitch);
  Eigen::Matrix3d r;
  r << c, 0, s,
       0, 1, 0,
       -s, 0, c;
  return r;
}

inline Eigen::Matrix3d rotation_z(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return r;
}

/// Body-to-NED rotation R3(yaw) * R2(pitch) * R1(roll).
inline RotationMatrix3 euler_to_rotation(const EulerAttitude &a) {
  if (!std::isfinite(a.yaw) || !std::isfinite(a.pitch) || !std::isfinite(a.roll))
    throw Error(ErrorKind::InvalidCoordinate, "non-finite attitude");
  return {rotation_z(a.yaw) * rotation_y(a.pitch) * rotation_x(a.roll)};
}

inline LocalVector apply_rotation(const RotationMatrix3 &r, const LocalVector &v) {
  return LocalVector::from(r.m * v.vec());
}

inline LocalVector transpose_apply(const RotationMatrix3 &r, const LocalVector &v) {
  return LocalVector::from(r.m.transpose() * v.vec());
}

} // namespace gnssbench
