#include "oppraim/positioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oppraim {

const char* to_string(Method m) {
  switch (m) {
    case Method::kGnssTrilateration: return "gnss";
    case Method::kRssiWls: return "rssi_wls";
    case Method::kGeoipDelay: return "geoip_delay";
    case Method::kGeoipTabulation: return "geoip_table";
  }
  return "?";
}

double RangingModelParams::path_loss_exponent(Infrastructure m) const {
  switch (m) {
    case Infrastructure::kCellular: return cell_path_loss;
    case Infrastructure::kBluetooth: return bt_path_loss;
    default: return wifi_path_loss;
  }
}

double rssi_to_distance(double rssi_dbm, double p0_dbm, double path_loss_exponent) {
  const double d = std::pow(10.0, (p0_dbm - rssi_dbm) / (10.0 * path_loss_exponent));
  return std::clamp(d, 0.1, 1e5);
}

double rssi_to_distance(double rssi_dbm, Infrastructure m, const RangingModelParams& params) {
  return rssi_to_distance(rssi_dbm, params.rssi_p0_dbm, params.path_loss_exponent(m));
}

double rtt_to_distance(double rtt_ms, const RangingModelParams& params) {
  return std::max(0.0, params.rtt_slope_km_per_ms * 1e3 * (rtt_ms - params.rtt_intercept_ms));
}

Solved<RttFit> fit_rtt_model(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 2) return SolveError::kDegenerateFit;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [rtt, d] : pairs) {
    sx += rtt;
    sy += d;
    sxx += rtt * rtt;
    sxy += rtt * d;
  }
  const double n = static_cast<double>(pairs.size());
  const double var = sxx - sx * sx / n;
  if (var <= 1e-12) return SolveError::kDegenerateFit;  // all RTTs equal
  const double slope_m_per_ms = (sxy - sx * sy / n) / var;
  if (slope_m_per_ms <= 0.0) return SolveError::kDegenerateFit;
  const double offset_m = (sy - slope_m_per_ms * sx) / n;
  return RttFit{slope_m_per_ms / 1e3, -offset_m / slope_m_per_ms};
}

Solved<DopResult> compute_dop(const Eigen::MatrixXd& geometry) {
  if (geometry.rows() < geometry.cols()) return SolveError::kSingularGeometry;
  const Eigen::MatrixXd normal = geometry.transpose() * geometry;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const double min_ev = eig.eigenvalues().minCoeff();
  const double max_ev = eig.eigenvalues().maxCoeff();
  if (!(min_ev > 0.0) || max_ev / min_ev > 1e12) return SolveError::kSingularGeometry;
  const Eigen::MatrixXd q = normal.inverse();
  DopResult out;
  for (int i = 0; i < 4; ++i) out.axis[i] = std::sqrt(q(i, i));
  out.scalar = std::sqrt(q.trace());
  return out;
}

namespace {

// Condition number of a symmetric positive semi-definite normal matrix.
double normal_condition(const Eigen::MatrixXd& normal) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const double min_ev = eig.eigenvalues().minCoeff();
  const double max_ev = eig.eigenvalues().maxCoeff();
  if (!(min_ev > 0.0)) return std::numeric_limits<double>::infinity();
  return max_ev / min_ev;
}

}  // namespace

Solved<PositionEstimate> gnss_trilateration(std::span<const RangingObservation> obs,
                                            const EnuFrame& frame,
                                            const TrilaterationOptions& opt) {
  const int n = static_cast<int>(obs.size());
  if (n < 4) return SolveError::kInsufficientAnchors;
  for (const RangingObservation& o : obs) {
    if (!o.satellite_ecef) return SolveError::kInsufficientAnchors;
  }

  Eigen::Vector3d p = opt.init.vec();
  double bias = 0.0;

  Eigen::MatrixXd jac(n, 4);
  Eigen::VectorXd res(n);
  auto evaluate = [&](const Eigen::Vector3d& pos, double b, Eigen::VectorXd& out) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector3d diff = pos - obs[j].satellite_ecef->vec();
      out[j] = obs[j].value - (diff.norm() + b);
    }
  };

  evaluate(p, bias, res);
  double ssr = res.squaredNorm();
  bool converged = false;
  for (int it = 0; it < opt.max_iterations && !converged; ++it) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector3d diff = p - obs[j].satellite_ecef->vec();
      const double range = std::max(diff.norm(), 1.0);
      jac.block<1, 3>(j, 0) = diff.transpose() / range;
      jac(j, 3) = 1.0;
    }
    const Eigen::Matrix4d normal = jac.transpose() * jac;
    if (normal_condition(normal) > opt.condition_limit) return SolveError::kSingularGeometry;
    Eigen::Vector4d delta = normal.ldlt().solve(jac.transpose() * res);

    // Halve the step while the objective increases.
    Eigen::VectorXd trial_res(n);
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 12; ++half) {
      const Eigen::Vector3d trial_p = p + scale * delta.head<3>();
      const double trial_b = bias + scale * delta[3];
      evaluate(trial_p, trial_b, trial_res);
      const double trial_ssr = trial_res.squaredNorm();
      if (trial_ssr <= ssr * (1.0 + 1e-12)) {
        p = trial_p;
        bias = trial_b;
        res = trial_res;
        ssr = trial_ssr;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    if ((scale * delta.head<3>()).norm() < opt.step_tolerance_m) converged = true;
  }
  if (!converged) return SolveError::kNoConvergence;

  // A-posteriori sigma from DOP scaled by the residual RMS.
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d diff = p - obs[j].satellite_ecef->vec();
    const double range = std::max(diff.norm(), 1.0);
    jac.block<1, 3>(j, 0) = diff.transpose() / range;
    jac(j, 3) = 1.0;
  }
  const Eigen::Matrix4d q = (jac.transpose() * jac).inverse();
  const double apost = std::sqrt(ssr / std::max(1, n - 4));

  PositionEstimate est;
  est.method = Method::kGnssTrilateration;
  est.infrastructure = Infrastructure::kGnss;
  est.position = ecef_to_geodetic({p.x(), p.y(), p.z()});
  est.enu_m = frame.to_enu(EcefPosition{p.x(), p.y(), p.z()}).vec();
  est.clock_bias_m = bias;
  est.residual_rms = std::sqrt(ssr / n);
  const Eigen::Matrix3d q_enu =
      frame.ecef_to_enu_rotation() * q.topLeftCorner<3, 3>() * frame.ecef_to_enu_rotation().transpose();
  for (int i = 0; i < 3; ++i) est.sigma_enu_m[i] = std::sqrt(std::max(0.0, q_enu(i, i))) * apost;
  est.clock_sigma_m = std::sqrt(std::max(0.0, q(3, 3))) * apost;
  return est;
}

namespace {

struct WlsEval {
  double objective = 0.0;
};

double wls_objective(const Eigen::Vector2d& p, double up,
                     std::span<const Eigen::Vector3d> anchors, std::span<const double> dist) {
  double obj = 0.0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const double dx = p.x() - anchors[j].x();
    const double dy = p.y() - anchors[j].y();
    const double dz = up - anchors[j].z();
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double e = (r - dist[j]) / dist[j];
    obj += e * e;
  }
  return obj;
}

// Damped Gauss-Newton from one start; returns false on singular geometry.
bool wls_descend(Eigen::Vector2d& p, double up, std::span<const Eigen::Vector3d> anchors,
                 std::span<const double> dist, const WlsOptions& opt, double& obj_out) {
  const int n = static_cast<int>(anchors.size());
  Eigen::MatrixXd jac(n, 2);
  Eigen::VectorXd res(n);
  double obj = wls_objective(p, up, anchors, dist);
  for (int it = 0; it < opt.max_iterations; ++it) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector3d diff(p.x() - anchors[j].x(), p.y() - anchors[j].y(),
                                 up - anchors[j].z());
      const double r = std::max(diff.norm(), 1e-6);
      res[j] = (dist[j] - r) / dist[j];
      jac(j, 0) = diff.x() / (r * dist[j]);
      jac(j, 1) = diff.y() / (r * dist[j]);
    }
    const Eigen::Matrix2d normal = jac.transpose() * jac;
    if (normal_condition(normal) > opt.condition_limit) return false;
    const Eigen::Vector2d delta = normal.ldlt().solve(jac.transpose() * res);
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 12; ++half) {
      const Eigen::Vector2d trial = p + scale * delta;
      const double trial_obj = wls_objective(trial, up, anchors, dist);
      if (trial_obj <= obj * (1.0 + 1e-12)) {
        p = trial;
        obj = trial_obj;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
    if ((scale * delta).norm() < opt.step_tolerance_m) break;
  }
  obj_out = obj;
  return true;
}

}  // namespace

Solved<PositionEstimate> geolocation_wls(std::span<const Eigen::Vector3d> anchors_enu,
                                         std::span<const double> distances_m,
                                         const EnuFrame& frame, const WlsOptions& opt) {
  const int n = static_cast<int>(anchors_enu.size());
  if (n < 3 || distances_m.size() != anchors_enu.size()) {
    return SolveError::kInsufficientAnchors;
  }
  for (double d : distances_m) {
    if (!(d > 0.0)) return SolveError::kInsufficientAnchors;
  }

  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& a : anchors_enu) centroid += a.head<2>();
  centroid /= n;
  double spread = 0.0;
  for (const auto& a : anchors_enu) spread += (a.head<2>() - centroid).squaredNorm();
  spread = std::max(std::sqrt(spread / n), 10.0);

  // Multi-start: centroid plus four perturbed starts; anchors themselves are
  // added as seeds when they beat the best converged objective.
  std::vector<Eigen::Vector2d> starts = {
      centroid,
      centroid + Eigen::Vector2d(spread, spread),
      centroid + Eigen::Vector2d(-spread, spread),
      centroid + Eigen::Vector2d(spread, -spread),
      centroid + Eigen::Vector2d(-spread, -spread),
  };

  bool any = false;
  Eigen::Vector2d best = centroid;
  double best_obj = std::numeric_limits<double>::infinity();
  auto try_start = [&](Eigen::Vector2d start) {
    double obj = 0.0;
    if (!wls_descend(start, opt.fixed_up_m, anchors_enu, distances_m, opt, obj)) return;
    any = true;
    if (obj < best_obj) {
      best_obj = obj;
      best = start;
    }
  };
  for (const auto& s : starts) try_start(s);
  if (!any) return SolveError::kSingularGeometry;
  for (const auto& a : anchors_enu) {
    if (wls_objective(a.head<2>(), opt.fixed_up_m, anchors_enu, distances_m) < best_obj) {
      try_start(a.head<2>());
    }
  }

  // Uncertainty from the weighted least-squares residual.
  Eigen::MatrixXd jac(n, 2);
  double ssr = 0.0;
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d diff(best.x() - anchors_enu[j].x(), best.y() - anchors_enu[j].y(),
                               opt.fixed_up_m - anchors_enu[j].z());
    const double r = std::max(diff.norm(), 1e-6);
    const double e = (r - distances_m[j]) / distances_m[j];
    ssr += e * e;
    jac(j, 0) = diff.x() / (r * distances_m[j]);
    jac(j, 1) = diff.y() / (r * distances_m[j]);
  }
  const Eigen::Matrix2d q = (jac.transpose() * jac).inverse();
  const double apost = std::sqrt(ssr / std::max(1, n - 2));

  PositionEstimate est;
  est.method = Method::kRssiWls;
  EnuPoint enu(best.x(), best.y(), opt.fixed_up_m);
  est.position = frame.to_geodetic(enu);
  est.enu_m = enu.vec();
  est.residual_rms = std::sqrt(ssr / n);
  est.sigma_enu_m[0] = std::sqrt(std::max(0.0, q(0, 0))) * apost;
  est.sigma_enu_m[1] = std::sqrt(std::max(0.0, q(1, 1))) * apost;
  est.sigma_enu_m[2] = opt.up_sigma_m;
  return est;
}

namespace {

double hinge_objective(const Eigen::Vector2d& p, std::span<const Eigen::Vector3d> servers,
                       std::span<const double> dist) {
  double obj = 0.0;
  for (std::size_t j = 0; j < servers.size(); ++j) {
    const Eigen::Vector3d diff(p.x() - servers[j].x(), p.y() - servers[j].y(), -servers[j].z());
    const double v = std::max(0.0, diff.norm() - dist[j]);
    obj += v * v;
  }
  return obj;
}

}  // namespace

Solved<PositionEstimate> geoip_position(std::span<const Eigen::Vector3d> servers_enu,
                                        std::span<const double> rtts_ms,
                                        const RangingModelParams& params,
                                        const std::optional<GeodeticPosition>& table_position,
                                        const EnuFrame& frame, const GeoipOptions& opt) {
  const int n = static_cast<int>(servers_enu.size());
  if (n < 3 || rtts_ms.size() != servers_enu.size()) {
    if (table_position) {
      PositionEstimate est;
      est.method = Method::kGeoipTabulation;
      est.infrastructure = Infrastructure::kGeoip;
      est.position = *table_position;
      est.enu_m = frame.to_enu(*table_position).vec();
      est.sigma_enu_m.setConstant(opt.tabulation_sigma_m);
      return est;
    }
    return SolveError::kNoGeoipData;
  }

  std::vector<double> dist(rtts_ms.size());
  for (std::size_t j = 0; j < rtts_ms.size(); ++j) {
    dist[j] = std::max(1.0, rtt_to_distance(rtts_ms[j], params));
  }

  // Grid seed over the server bounding box, then damped Levenberg steps on
  // the active hinge terms.
  Eigen::Vector2d lo(servers_enu[0].x(), servers_enu[0].y());
  Eigen::Vector2d hi = lo;
  for (const auto& s : servers_enu) {
    lo = lo.cwiseMin(s.head<2>());
    hi = hi.cwiseMax(s.head<2>());
  }
  Eigen::Vector2d best = Eigen::Vector2d::Zero();
  double best_obj = hinge_objective(best, servers_enu, dist);
  const int g = std::max(2, opt.grid_points_per_axis);
  for (int ix = 0; ix < g; ++ix) {
    for (int iy = 0; iy < g; ++iy) {
      Eigen::Vector2d p(lo.x() + (hi.x() - lo.x()) * ix / (g - 1),
                        lo.y() + (hi.y() - lo.y()) * iy / (g - 1));
      const double obj = hinge_objective(p, servers_enu, dist);
      if (obj < best_obj) {
        best_obj = obj;
        best = p;
      }
    }
  }

  Eigen::Vector2d p = best;
  double obj = best_obj;
  double lambda = 1e-6;
  for (int it = 0; it < opt.max_iterations && obj > 1e-12; ++it) {
    Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector3d diff(p.x() - servers_enu[j].x(), p.y() - servers_enu[j].y(),
                                 -servers_enu[j].z());
      const double r = std::max(diff.norm(), 1e-6);
      const double v = r - dist[j];
      if (v <= 0.0) continue;
      const Eigen::Vector2d u = diff.head<2>() / r;
      normal += u * u.transpose();
      grad += u * v;
    }
    const Eigen::Vector2d delta =
        -(normal + lambda * Eigen::Matrix2d::Identity()).ldlt().solve(grad);
    const Eigen::Vector2d trial = p + delta;
    const double trial_obj = hinge_objective(trial, servers_enu, dist);
    if (trial_obj <= obj) {
      p = trial;
      obj = trial_obj;
      lambda = std::max(1e-9, lambda * 0.5);
      if (delta.norm() < opt.step_tolerance_m) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e9) break;
    }
  }

  // Signed circle residuals scale the geometric covariance.
  Eigen::MatrixXd jac(n, 2);
  double ssr = 0.0;
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d diff(p.x() - servers_enu[j].x(), p.y() - servers_enu[j].y(),
                               -servers_enu[j].z());
    const double r = std::max(diff.norm(), 1e-6);
    const double s = r - dist[j];
    ssr += s * s;
    jac.row(j) = (diff.head<2>() / r).transpose();
  }
  const double rms = std::sqrt(ssr / std::max(1, n - 2));
  const Eigen::Matrix2d normal = jac.transpose() * jac;
  Eigen::Vector2d axis_sigma(rms, rms);
  if (normal_condition(normal) < 1e12) {
    const Eigen::Matrix2d q = normal.inverse();
    axis_sigma[0] = std::sqrt(std::max(0.0, q(0, 0))) * rms;
    axis_sigma[1] = std::sqrt(std::max(0.0, q(1, 1))) * rms;
  }

  PositionEstimate est;
  est.method = Method::kGeoipDelay;
  est.infrastructure = Infrastructure::kGeoip;
  EnuPoint enu(p.x(), p.y(), 0.0);
  est.position = frame.to_geodetic(enu);
  est.enu_m = enu.vec();
  est.residual_rms = rms;
  est.sigma_enu_m[0] = axis_sigma[0];
  est.sigma_enu_m[1] = axis_sigma[1];
  est.sigma_enu_m[2] = axis_sigma.maxCoeff();
  return est;
}

}  // namespace oppraim
