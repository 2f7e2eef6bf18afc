#include "oppraim/geo.hpp"

#include <cmath>

namespace oppraim {

const char* to_string(SolveError e) {
  switch (e) {
    case SolveError::kInsufficientAnchors: return "insufficient anchors";
    case SolveError::kSingularGeometry: return "singular geometry";
    case SolveError::kNoConvergence: return "no convergence";
    case SolveError::kInsufficientSatellites: return "insufficient satellites";
    case SolveError::kDegenerateFit: return "degenerate fit";
    case SolveError::kNoGeoipData: return "no geoip data";
  }
  return "unknown";
}

bool valid(const GeodeticPosition& p) {
  return std::isfinite(p.latitude_deg) && std::isfinite(p.longitude_deg) &&
         std::isfinite(p.altitude_m) && p.latitude_deg >= -90.0 && p.latitude_deg <= 90.0 &&
         p.longitude_deg >= -180.0 && p.longitude_deg < 180.0;
}

EcefPosition geodetic_to_ecef(const GeodeticPosition& p) {
  if (!valid(p)) {
    throw InvalidCoordinate("geodetic_to_ecef: coordinate out of range or non-finite");
  }
  const double lat = p.latitude_deg * kDegToRad;
  const double lon = p.longitude_deg * kDegToRad;
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  const double n = wgs84::kSemiMajorM / std::sqrt(1.0 - wgs84::kEccSq * sin_lat * sin_lat);
  return {(n + p.altitude_m) * cos_lat * std::cos(lon),
          (n + p.altitude_m) * cos_lat * std::sin(lon),
          (n * (1.0 - wgs84::kEccSq) + p.altitude_m) * sin_lat};
}

GeodeticPosition ecef_to_geodetic(const EcefPosition& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
    throw InvalidCoordinate("ecef_to_geodetic: non-finite input");
  }
  const double rho = std::hypot(p.x, p.y);
  if (rho < 1.0) {
    // Polar closed form; avoids the longitude singularity.
    const double sign = p.z >= 0.0 ? 1.0 : -1.0;
    return {sign * 90.0, 0.0, sign * p.z - wgs84::kSemiMinorM};
  }
  const double lon = std::atan2(p.y, p.x);

  // Bowring's initial guess followed by fixed-point refinement.
  const double a = wgs84::kSemiMajorM;
  const double b = wgs84::kSemiMinorM;
  const double e2 = wgs84::kEccSq;
  const double ep2 = (a * a - b * b) / (b * b);
  const double beta = std::atan2(p.z * a, rho * b);
  double lat = std::atan2(p.z + ep2 * b * std::pow(std::sin(beta), 3),
                          rho - e2 * a * std::pow(std::cos(beta), 3));
  double n = a;
  double alt = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double sin_lat = std::sin(lat);
    n = a / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
    alt = rho / std::cos(lat) - n;
    lat = std::atan2(p.z, rho * (1.0 - e2 * n / (n + alt)));
  }
  return {lat * kRadToDeg, lon * kRadToDeg, alt};
}

Eigen::Matrix3d rotation_matrix(const OrientationAngles& o) {
  const double phi = o.roll_deg * kDegToRad;
  const double theta = o.pitch_deg * kDegToRad;
  const double psi = o.yaw_deg * kDegToRad;

  Eigen::Matrix3d mz;  // psi factor
  mz << std::cos(psi), -std::sin(psi), 0.0,
        std::sin(psi),  std::cos(psi), 0.0,
        0.0,            0.0,           1.0;
  Eigen::Matrix3d mx;  // theta factor
  mx << 1.0, 0.0,              0.0,
        0.0, std::cos(theta),  std::sin(theta),
        0.0, -std::sin(theta), std::cos(theta);
  Eigen::Matrix3d my;  // phi factor
  my << std::cos(phi), 0.0, -std::sin(phi),
        0.0,           1.0, 0.0,
        std::sin(phi), 0.0, std::cos(phi);
  return mz * mx * my;
}

double distance_m(const GeodeticPosition& a, const GeodeticPosition& b) {
  return (geodetic_to_ecef(a).vec() - geodetic_to_ecef(b).vec()).norm();
}

EnuFrame::EnuFrame(const GeodeticPosition& origin)
    : origin_(origin), origin_ecef_(geodetic_to_ecef(origin).vec()) {
  const double lat = origin.latitude_deg * kDegToRad;
  const double lon = origin.longitude_deg * kDegToRad;
  const double sl = std::sin(lat), cl = std::cos(lat);
  const double so = std::sin(lon), co = std::cos(lon);
  rot_ << -so,       co,       0.0,
          -sl * co,  -sl * so, cl,
          cl * co,   cl * so,  sl;
}

EnuPoint EnuFrame::to_enu(const EcefPosition& p) const {
  return EnuPoint(rot_ * (p.vec() - origin_ecef_));
}

EnuPoint EnuFrame::to_enu(const GeodeticPosition& p) const { return to_enu(geodetic_to_ecef(p)); }

EcefPosition EnuFrame::to_ecef(const EnuPoint& p) const {
  const Eigen::Vector3d v = origin_ecef_ + rot_.transpose() * p.vec();
  return {v.x(), v.y(), v.z()};
}

GeodeticPosition EnuFrame::to_geodetic(const EnuPoint& p) const {
  return ecef_to_geodetic(to_ecef(p));
}

}  // namespace oppraim
