#pragma once

#include <Eigen/Dense>

#include "oppraim/errors.hpp"

namespace oppraim {

namespace wgs84 {
inline constexpr double kSemiMajorM = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kSemiMinorM = kSemiMajorM * (1.0 - kFlattening);
inline constexpr double kEccSq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

inline constexpr double kSpeedOfLightMps = 299792458.0;
inline constexpr double kDegToRad = M_PI / 180.0;
inline constexpr double kRadToDeg = 180.0 / M_PI;

// Latitude/longitude in degrees, altitude in meters above the WGS84 ellipsoid.
struct GeodeticPosition {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;
};

// Earth-centered Earth-fixed, meters.
struct EcefPosition {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  double norm() const { return vec().norm(); }
};

// East/north/up meters relative to a declared geodetic origin.
struct EnuPoint {
  double east = 0.0;
  double north = 0.0;
  double up = 0.0;

  EnuPoint() = default;
  EnuPoint(double e, double n, double u) : east(e), north(n), up(u) {}
  explicit EnuPoint(const Eigen::Vector3d& v) : east(v.x()), north(v.y()), up(v.z()) {}
  Eigen::Vector3d vec() const { return {east, north, up}; }
};

// Platform sensor-frame attitude, degrees.
struct OrientationAngles {
  double roll_deg = 0.0;   // phi
  double pitch_deg = 0.0;  // theta
  double yaw_deg = 0.0;    // psi
};

bool valid(const GeodeticPosition& p);

EcefPosition geodetic_to_ecef(const GeodeticPosition& p);
GeodeticPosition ecef_to_geodetic(const EcefPosition& p);

// Sensor-frame -> world rotation, built as the displayed product
// Z(psi) * X'(theta) * Y'(phi); note the sign pattern of the second and third
// factors differs from the aviation convention.
Eigen::Matrix3d rotation_matrix(const OrientationAngles& o);

// 3-D Euclidean distance evaluated in ECEF.
double distance_m(const GeodeticPosition& a, const GeodeticPosition& b);

// Local tangent frame anchored at a geodetic origin, declared once per trace.
class EnuFrame {
 public:
  explicit EnuFrame(const GeodeticPosition& origin);

  const GeodeticPosition& origin() const { return origin_; }

  EnuPoint to_enu(const GeodeticPosition& p) const;
  EnuPoint to_enu(const EcefPosition& p) const;
  GeodeticPosition to_geodetic(const EnuPoint& p) const;
  EcefPosition to_ecef(const EnuPoint& p) const;

  // Rows are the east/north/up unit vectors in ECEF coordinates.
  const Eigen::Matrix3d& ecef_to_enu_rotation() const { return rot_; }

 private:
  GeodeticPosition origin_;
  Eigen::Vector3d origin_ecef_;
  Eigen::Matrix3d rot_;
};

}  // namespace oppraim
