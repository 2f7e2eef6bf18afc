#pragma once

#include <span>
#include <utility>

#include "oppraim/trace.hpp"

namespace oppraim {

enum class Method : int {
  kGnssTrilateration = 0,
  kRssiWls = 1,
  kGeoipDelay = 2,
  kGeoipTabulation = 3,
};

const char* to_string(Method m);

// A subset solution with per-ENU-axis uncertainty and provenance.
struct PositionEstimate {
  GeodeticPosition position;
  Eigen::Vector3d enu_m = Eigen::Vector3d::Zero();  // same point in the trace ENU frame
  Eigen::Vector3d sigma_enu_m = Eigen::Vector3d::Zero();
  std::optional<double> clock_bias_m;
  std::optional<double> clock_sigma_m;
  double residual_rms = 0.0;
  Method method = Method::kGnssTrilateration;
  Infrastructure infrastructure = Infrastructure::kGnss;
  int subset_index = -1;
};

// Log-distance path loss and RTT ranging model parameters.
struct RangingModelParams {
  double rssi_p0_dbm = -40.0;  // reference power at d0 = 1 m
  double wifi_path_loss = 3.0;
  double cell_path_loss = 3.5;
  double bt_path_loss = 3.0;
  double fiber_factor = 0.5;  // kappa
  // c * kappa / 2, expressed in km per millisecond.
  double rtt_slope_km_per_ms = kSpeedOfLightMps * 0.5 / 2.0 / 1e6;
  double rtt_intercept_ms = 10.0;

  double path_loss_exponent(Infrastructure m) const;
};

double rssi_to_distance(double rssi_dbm, double p0_dbm, double path_loss_exponent);
double rssi_to_distance(double rssi_dbm, Infrastructure m, const RangingModelParams& params);

double rtt_to_distance(double rtt_ms, const RangingModelParams& params);

struct RttFit {
  double slope_km_per_ms = 0.0;
  double intercept_ms = 0.0;
};

// Ordinary least squares on (rtt_ms, true distance_m) training pairs.
Solved<RttFit> fit_rtt_model(std::span<const std::pair<double, double>> rtt_ms_distance_m);

struct DopResult {
  Eigen::Vector4d axis;  // sqrt of the diagonal of Q, in the geometry frame + clock
  double scalar = 0.0;   // sqrt(Tr(Q))
};

// Q = (G^T G)^-1 for a geometry matrix with rows [unit line-of-sight, 1].
Solved<DopResult> compute_dop(const Eigen::MatrixXd& geometry);

struct TrilaterationOptions {
  EcefPosition init{wgs84::kSemiMajorM, 0.0, 0.0};
  int max_iterations = 25;
  double step_tolerance_m = 1e-4;
  double condition_limit = 1e12;
};

// Gauss-Newton single point positioning on (x, y, z, c*dt). Observations must
// carry inline satellite ECEF positions.
Solved<PositionEstimate> gnss_trilateration(std::span<const RangingObservation> obs,
                                            const EnuFrame& frame,
                                            const TrilaterationOptions& opt = {});

struct WlsOptions {
  double fixed_up_m = 0.0;  // motion-propagated altitude, ENU up
  double up_sigma_m = 10.0;
  int max_iterations = 50;
  double step_tolerance_m = 1e-4;
  double condition_limit = 1e12;
};

// Weighted least squares over anchor ranges in 2-D ENU; weights are the
// inverse square of the ranging values.
Solved<PositionEstimate> geolocation_wls(std::span<const Eigen::Vector3d> anchors_enu,
                                         std::span<const double> distances_m,
                                         const EnuFrame& frame, const WlsOptions& opt = {});

struct GeoipOptions {
  double tabulation_sigma_m = 25000.0;
  int grid_points_per_axis = 12;
  int max_iterations = 60;
  double step_tolerance_m = 1.0;
};

// Delay-based multilateration: minimizes the hinge objective
// sum_j max(0, ||p - a_j|| - d_j)^2, whose zero set is the intersection of the
// ranging circles; falls back to the tabulation position below 3 RTTs.
Solved<PositionEstimate> geoip_position(std::span<const Eigen::Vector3d> servers_enu,
                                        std::span<const double> rtts_ms,
                                        const RangingModelParams& params,
                                        const std::optional<GeodeticPosition>& table_position,
                                        const EnuFrame& frame, const GeoipOptions& opt = {});

}  // namespace oppraim
