#include "oppraim/sim.hpp"

#include <algorithm>
#include <cmath>

#include "oppraim/subsets.hpp"

namespace oppraim {

namespace {
constexpr double kEarthRadiusM = 6371000.0;
constexpr double kGnssOrbitRadiusM = wgs84::kSemiMajorM + 20200e3;
}  // namespace

void validate(const ScenarioConfig& cfg) {
  if (cfg.waypoints.size() < 2) throw ConfigInvalid("scenario: need >= 2 waypoints");
  for (const GeodeticPosition& w : cfg.waypoints) {
    if (!valid(w)) throw ConfigInvalid("scenario: invalid waypoint");
  }
  if (!(cfg.speed_mps > 0.0)) throw ConfigInvalid("scenario: speed must be > 0");
  if (!(cfg.epoch_rate_hz > 0.0)) throw ConfigInvalid("scenario: epoch_rate must be > 0");
  if (cfg.satellite_count < 4) throw ConfigInvalid("scenario: need >= 4 satellites");
  if (cfg.wifi_count < 3 || cfg.cell_count < 3 || cfg.bt_count < 3 || cfg.geoip_count < 3) {
    throw ConfigInvalid("scenario: need >= 3 anchors per network infrastructure");
  }
}

void validate(const NoiseModel& noise) {
  const double sigmas[] = {noise.pseudorange_sigma_m, noise.clock_walk_m_per_sqrt_s,
                           noise.shadowing_sigma_db,  noise.rtt_jitter_ms,
                           noise.lbs_sigma_m,         noise.velocity_sigma_mps,
                           noise.accel_sigma_mps2,    noise.orientation_sigma_deg};
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ConfigInvalid("noise: sigmas must be >= 0");
  }
}

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kGnssJam: return "gnss_jam";
    case AttackKind::kGnssSpoof: return "gnss_spoof";
    case AttackKind::kWifiReplay: return "wifi_replay";
    case AttackKind::kCoordinated: return "coordinated";
    case AttackKind::kGeoipDelay: return "geoip_delay";
  }
  return "?";
}

std::optional<AttackKind> attack_kind_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(AttackKind::kGeoipDelay); ++i) {
    if (s == to_string(static_cast<AttackKind>(i))) return static_cast<AttackKind>(i);
  }
  return std::nullopt;
}

std::vector<RangingObservation> synth_gnss_observations(const GeodeticPosition& truth,
                                                        double clock_bias_m,
                                                        std::span<const SatelliteSpec> sats,
                                                        const NoiseModel& noise,
                                                        std::mt19937_64& rng) {
  if (sats.size() < 4) throw ConfigInvalid("synth_gnss_observations: need >= 4 satellites");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Vector3d user = geodetic_to_ecef(truth).vec();
  std::vector<RangingObservation> out;
  out.reserve(sats.size());
  for (const SatelliteSpec& s : sats) {
    RangingObservation o;
    o.infrastructure = Infrastructure::kGnss;
    o.anchor_id = s.id;
    o.constellation = s.constellation;
    o.satellite_ecef = s.ecef;
    o.value = (user - s.ecef.vec()).norm() + clock_bias_m +
              gauss(rng) * noise.pseudorange_sigma_m;
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

double reception_radius(Infrastructure m, const SimParams& p) {
  switch (m) {
    case Infrastructure::kCellular: return p.cell_radius_m;
    case Infrastructure::kBluetooth: return p.bt_radius_m;
    default: return p.wifi_radius_m;
  }
}

double synth_rssi(double distance_m, Infrastructure m, const SimParams& p, double shadow_db) {
  const double d = std::max(distance_m, 0.1);
  const double rssi = p.ranging.rssi_p0_dbm -
                      10.0 * p.ranging.path_loss_exponent(m) * std::log10(d) + shadow_db;
  return std::min(rssi, -1.0);
}

double synth_rtt(double distance_m, const SimParams& p, double jitter_ms) {
  const double rtt = 2.0 * distance_m / (kSpeedOfLightMps * p.ranging.fiber_factor) * 1e3 +
                     p.noise.rtt_base_latency_ms + jitter_ms;
  return std::max(rtt, 0.0);
}

}  // namespace

std::vector<RangingObservation> synth_network_observations(const GeodeticPosition& truth,
                                                           std::span<const AnchorRecord> anchors,
                                                           const SimParams& params,
                                                           std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<RangingObservation> out;
  for (const AnchorRecord& a : anchors) {
    const double d = distance_m(truth, a.position);
    const double shadow = gauss(rng) * params.noise.shadowing_sigma_db;
    if (d > reception_radius(a.infrastructure, params)) continue;
    RangingObservation o;
    o.infrastructure = a.infrastructure;
    o.anchor_id = a.anchor_id;
    o.value = synth_rssi(d, a.infrastructure, params, shadow);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<RangingObservation> synth_geoip_observations(const GeodeticPosition& truth,
                                                         std::span<const AnchorRecord> servers,
                                                         const SimParams& params,
                                                         std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<RangingObservation> out;
  for (const AnchorRecord& s : servers) {
    RangingObservation o;
    o.infrastructure = Infrastructure::kGeoip;
    o.anchor_id = s.anchor_id;
    o.value = synth_rtt(distance_m(truth, s.position), params,
                        gauss(rng) * params.noise.rtt_jitter_ms);
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

// Approximate geodetic offset; the ranging model itself always works with
// exact ECEF chords, so placement only needs to be plausible.
GeodeticPosition offset_geodetic(const GeodeticPosition& base, double east_m, double north_m) {
  GeodeticPosition out = base;
  out.latitude_deg += north_m / kEarthRadiusM * kRadToDeg;
  out.longitude_deg +=
      east_m / (kEarthRadiusM * std::cos(base.latitude_deg * kDegToRad)) * kRadToDeg;
  return out;
}

struct Path {
  EnuFrame frame;
  std::vector<Eigen::Vector3d> nodes;  // waypoints in ENU
  std::vector<double> cumulative;      // arc length at each node
  double total = 0.0;

  explicit Path(const std::vector<GeodeticPosition>& waypoints) : frame(waypoints.front()) {
    nodes.reserve(waypoints.size());
    cumulative.reserve(waypoints.size());
    for (const GeodeticPosition& w : waypoints) {
      const Eigen::Vector3d p = frame.to_enu(w).vec();
      if (!nodes.empty()) total += (p - nodes.back()).norm();
      nodes.push_back(p);
      cumulative.push_back(total);
    }
  }

  Eigen::Vector3d at(double s) const {
    s = std::clamp(s, 0.0, total);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    std::size_t i = std::min(nodes.size() - 1,
                             static_cast<std::size_t>(it - cumulative.begin()));
    if (i == 0) return nodes.front();
    const double seg = cumulative[i] - cumulative[i - 1];
    const double f = seg > 0.0 ? (s - cumulative[i - 1]) / seg : 0.0;
    return nodes[i - 1] + f * (nodes[i] - nodes[i - 1]);
  }
};

std::vector<SatelliteSpec> place_satellites(const EnuFrame& frame, int count,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xA11CE5ULL));
  std::uniform_real_distribution<double> az_dist(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> el_dist(15.0 * kDegToRad, 80.0 * kDegToRad);
  const Eigen::Vector3d origin = geodetic_to_ecef(frame.origin()).vec();
  const Eigen::Matrix3d enu_to_ecef = frame.ecef_to_enu_rotation().transpose();
  static const char* prefixes[kConstellationCount] = {"G", "E", "R", "C"};

  std::vector<SatelliteSpec> sats;
  sats.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double az = az_dist(rng);
    const double el = el_dist(rng);
    const Eigen::Vector3d dir_enu(std::cos(el) * std::sin(az), std::cos(el) * std::cos(az),
                                  std::sin(el));
    const Eigen::Vector3d u = enu_to_ecef * dir_enu;
    // Range to the orbit sphere along the line of sight.
    const double b = origin.dot(u);
    const double r = -b + std::sqrt(b * b + kGnssOrbitRadiusM * kGnssOrbitRadiusM -
                                    origin.squaredNorm());
    const Eigen::Vector3d pos = origin + r * u;
    SatelliteSpec s;
    s.constellation = static_cast<Constellation>(i % kConstellationCount);
    char id[8];
    std::snprintf(id, sizeof(id), "%s%02d", prefixes[i % kConstellationCount],
                  i / kConstellationCount + 1);
    s.id = id;
    s.ecef = {pos.x(), pos.y(), pos.z()};
    sats.push_back(std::move(s));
  }
  return sats;
}

std::vector<AnchorRecord> place_network_anchors(const Path& path, Infrastructure m, int count,
                                                double spread_m, const char* prefix,
                                                std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lateral(-1.0, 1.0);
  std::vector<AnchorRecord> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double s = path.total * (i + 0.5) / count;
    const Eigen::Vector3d on_path = path.at(s);
    // Keep a minimum standoff so near-field RSSI stays in range.
    double off_e = lateral(rng) * spread_m;
    double off_n = lateral(rng) * spread_m;
    const double norm = std::hypot(off_e, off_n);
    const double min_standoff = 10.0;
    if (norm < min_standoff) {
      off_e = min_standoff;
      off_n = min_standoff;
    }
    AnchorRecord a;
    char id[32];
    std::snprintf(id, sizeof(id), "%s%02d", prefix, i);
    a.anchor_id = id;
    a.infrastructure = m;
    a.mobility = Mobility::kFixed;
    a.name = std::string("net_") + id;
    a.position = path.frame.to_geodetic(
        EnuPoint(on_path.x() + off_e, on_path.y() + off_n, on_path.z()));
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace

BenignScenario generate_benign_trace(const ScenarioConfig& cfg, const NoiseModel& noise,
                                     const RangingModelParams& ranging) {
  validate(cfg);
  validate(noise);

  const Path path(cfg.waypoints);
  const double dt = 1.0 / cfg.epoch_rate_hz;
  int epochs = static_cast<int>(std::floor(path.total / cfg.speed_mps / dt)) + 1;
  if (cfg.max_epochs > 0) epochs = std::min(epochs, cfg.max_epochs);
  if (epochs < 2) throw ConfigInvalid("scenario: path too short for two epochs");

  SimParams params;
  params.ranging = ranging;
  params.noise = noise;
  params.wifi_radius_m = cfg.wifi_radius_m;
  params.bt_radius_m = cfg.bt_radius_m;
  params.cell_radius_m = cfg.cell_radius_m;

  BenignScenario scenario;
  scenario.satellites = place_satellites(path.frame, cfg.satellite_count, cfg.geometry_seed);

  std::mt19937_64 place_rng(splitmix64(cfg.geometry_seed ^ 0xBEACULL));
  std::array<std::vector<AnchorRecord>, kInfrastructureCount> anchors;
  anchors[static_cast<int>(Infrastructure::kWifi)] = place_network_anchors(
      path, Infrastructure::kWifi, cfg.wifi_count, cfg.wifi_spread_m, "wifi_", place_rng);
  anchors[static_cast<int>(Infrastructure::kCellular)] = place_network_anchors(
      path, Infrastructure::kCellular, cfg.cell_count, cfg.cell_spread_m, "cell_", place_rng);
  anchors[static_cast<int>(Infrastructure::kBluetooth)] = place_network_anchors(
      path, Infrastructure::kBluetooth, cfg.bt_count, cfg.bt_spread_m, "bt_", place_rng);

  // GeoIP servers on a ring at continental distances.
  {
    std::uniform_real_distribution<double> radius_km(cfg.geoip_min_km, cfg.geoip_max_km);
    auto& servers = anchors[static_cast<int>(Infrastructure::kGeoip)];
    for (int i = 0; i < cfg.geoip_count; ++i) {
      const double angle = 2.0 * M_PI * i / cfg.geoip_count;
      const double r = radius_km(place_rng) * 1e3;
      AnchorRecord a;
      char id[32];
      std::snprintf(id, sizeof(id), "geoip_%02d", i);
      a.anchor_id = id;
      a.infrastructure = Infrastructure::kGeoip;
      a.mobility = Mobility::kFixed;
      a.name = std::string("dc_") + id;
      a.position = offset_geodetic(path.frame.origin(), r * std::sin(angle), r * std::cos(angle));
      out_of_line:
      anchors[static_cast<int>(Infrastructure::kGeoip)].push_back(std::move(a));
    }
  }

  for (const auto& group : anchors) {
    for (const AnchorRecord& a : group) scenario.db.insert(a);
  }
  scenario.db.add_geoip_prefix("10.0.", path.frame.origin());

  std::mt19937_64 rng(splitmix64(cfg.rng_seed));
  std::normal_distribution<double> gauss(0.0, 1.0);

  double clock_bias = 0.0;
  scenario.frames.reserve(epochs);
  for (int k = 0; k < epochs; ++k) {
    const double t = k * dt;
    const Eigen::Vector3d truth_enu = path.at(cfg.speed_mps * t);
    const Eigen::Vector3d next_enu = path.at(cfg.speed_mps * std::min<double>(t + dt, path.total / cfg.speed_mps));
    Eigen::Vector3d vel_enu = (next_enu - truth_enu) / dt;
    if (k + 1 == epochs && k > 0) {
      const Eigen::Vector3d prev_enu = path.at(cfg.speed_mps * (t - dt));
      vel_enu = (truth_enu - prev_enu) / dt;
    }
    const GeodeticPosition truth = path.frame.to_geodetic(EnuPoint(truth_enu));

    TraceFrame frame;
    frame.timestamp_s = t;
    frame.ground_truth = truth;
    frame.attack_label = false;

    // Motion in the sensor frame: yaw follows the path heading, so the body
    // x-axis carries the horizontal speed.
    double yaw_deg = 0.0;
    const double h_speed = std::hypot(vel_enu.x(), vel_enu.y());
    if (h_speed > 1e-9) yaw_deg = std::atan2(vel_enu.y(), vel_enu.x()) * kRadToDeg;
    const OrientationAngles orient{0.0, 0.0, yaw_deg};
    const Eigen::Matrix3d r = rotation_matrix(orient);
    const Eigen::Vector3d vel_sensor = r.transpose() * vel_enu;

    frame.motion.timestamp_s = t;
    frame.motion.velocity_mps = vel_sensor + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) *
                                                 noise.velocity_sigma_mps;
    frame.motion.acceleration_mps2 =
        Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * noise.accel_sigma_mps2;
    frame.motion.orientation = orient;
    frame.motion.orientation.yaw_deg += gauss(rng) * noise.orientation_sigma_deg;

    clock_bias += gauss(rng) * noise.clock_walk_m_per_sqrt_s * std::sqrt(dt);
    frame.obs(Infrastructure::kGnss) =
        synth_gnss_observations(truth, clock_bias, scenario.satellites, noise, rng);
    for (Infrastructure m : {Infrastructure::kWifi, Infrastructure::kCellular,
                             Infrastructure::kBluetooth}) {
      frame.obs(m) =
          synth_network_observations(truth, anchors[static_cast<int>(m)], params, rng);
    }
    frame.obs(Infrastructure::kGeoip) = synth_geoip_observations(
        truth, anchors[static_cast<int>(Infrastructure::kGeoip)], params, rng);
    for (auto& group : frame.observations) {
      for (RangingObservation& o : group) o.timestamp_s = t;
    }

    const Eigen::Vector3d lbs_enu =
        truth_enu + Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * noise.lbs_sigma_m;
    frame.lbs_position = path.frame.to_geodetic(EnuPoint(lbs_enu));
    scenario.frames.push_back(std::move(frame));
  }
  return scenario;
}

namespace {

GeodeticPosition spoof_position_at(const AttackEntry& entry, double t) {
  const std::size_t n = entry.spoof_trace.size();
  if (n == 1) return entry.spoof_trace.front();
  const double span = std::max(entry.end_s - entry.start_s, 1e-9);
  const double f = std::clamp((t - entry.start_s) / span, 0.0, 1.0);
  const std::size_t i =
      std::min(n - 1, static_cast<std::size_t>(std::llround(f * (n - 1))));
  return entry.spoof_trace[i];
}

bool has_spoof_trace(AttackKind k) {
  return k == AttackKind::kGnssSpoof || k == AttackKind::kWifiReplay ||
         k == AttackKind::kCoordinated;
}

}  // namespace

std::vector<TraceFrame> apply_attack(const std::vector<TraceFrame>& frames,
                                     const AttackSchedule& schedule, const AnchorDatabase& db,
                                     const SimParams& params, std::uint64_t rng_seed) {
  if (frames.empty()) return {};
  const double first_t = frames.front().timestamp_s;
  const double last_t = frames.back().timestamp_s;
  for (const AttackEntry& e : schedule.entries) {
    if (!(e.start_s < e.end_s)) throw ScheduleOutOfRange("attack entry with start >= end");
    if (e.end_s < first_t || e.start_s > last_t) {
      throw ScheduleOutOfRange("attack window outside the trace");
    }
    if (has_spoof_trace(e.kind) && e.spoof_trace.empty()) {
      throw ScheduleOutOfRange("spoofing attack without a spoof trace");
    }
  }

  std::mt19937_64 rng(splitmix64(rng_seed ^ 0xA77ACULL));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<TraceFrame> out = frames;
  std::vector<double> spoof_bias(schedule.entries.size(), 0.0);

  for (TraceFrame& frame : out) {
    const double t = frame.timestamp_s;
    bool lbs_replaced = false;
    for (std::size_t ei = 0; ei < schedule.entries.size(); ++ei) {
      const AttackEntry& entry = schedule.entries[ei];
      if (t < entry.start_s || t > entry.end_s) continue;

      switch (entry.kind) {
        case AttackKind::kGnssJam:
          frame.obs(Infrastructure::kGnss).clear();
          break;
        case AttackKind::kGnssSpoof:
        case AttackKind::kCoordinated: {
          const GeodeticPosition spoof = spoof_position_at(entry, t);
          const Eigen::Vector3d spoof_ecef = geodetic_to_ecef(spoof).vec();
          spoof_bias[ei] += gauss(rng) * params.noise.clock_walk_m_per_sqrt_s;
          for (RangingObservation& o : frame.obs(Infrastructure::kGnss)) {
            if (!o.constellation || !o.satellite_ecef) continue;
            const bool affected =
                entry.constellations.empty() ||
                std::find(entry.constellations.begin(), entry.constellations.end(),
                          *o.constellation) != entry.constellations.end();
            if (!affected) continue;
            o.value = (spoof_ecef - o.satellite_ecef->vec()).norm() + spoof_bias[ei] +
                      gauss(rng) * params.noise.pseudorange_sigma_m;
          }
          if (entry.kind == AttackKind::kGnssSpoof) break;
          [[fallthrough]];
        }
        case AttackKind::kWifiReplay: {
          const GeodeticPosition spoof = spoof_position_at(entry, t);
          for (Infrastructure m : {Infrastructure::kWifi, Infrastructure::kCellular,
                                   Infrastructure::kBluetooth}) {
            for (const std::string& id : entry.replay_anchors[static_cast<int>(m)]) {
              const AnchorRecord* a = db.find(m, id);
              if (a == nullptr) continue;
              const double d = distance_m(spoof, a->position);
              if (d > reception_radius(m, params)) continue;
              RangingObservation o;
              o.timestamp_s = t;
              o.infrastructure = m;
              o.anchor_id = id;
              o.value = synth_rssi(d, m, params, gauss(rng) * params.noise.shadowing_sigma_db);
              frame.obs(m).push_back(std::move(o));
            }
          }
          if (entry.kind != AttackKind::kCoordinated) break;
          // Coordinated attacks also steer GeoIP toward the spoof position.
          for (RangingObservation& o : frame.obs(Infrastructure::kGeoip)) {
            const AnchorRecord* server = db.find(Infrastructure::kGeoip, o.anchor_id);
            if (server == nullptr) continue;
            o.value = synth_rtt(distance_m(spoof, server->position), params,
                                gauss(rng) * params.noise.rtt_jitter_ms) +
                      entry.added_delay_ms;
          }
          break;
        }
        case AttackKind::kGeoipDelay:
          for (RangingObservation& o : frame.obs(Infrastructure::kGeoip)) {
            o.value += entry.added_delay_ms;
          }
          break;
      }

      if (has_spoof_trace(entry.kind) && !lbs_replaced) {
        const GeodeticPosition spoof = spoof_position_at(entry, t);
        const EnuFrame frame_enu(spoof);
        const Eigen::Vector3d noise_enu =
            Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * params.noise.lbs_sigma_m;
        frame.lbs_position = frame_enu.to_geodetic(EnuPoint(noise_enu));
        lbs_replaced = true;
      }
    }
    if (lbs_replaced && frame.ground_truth) {
      frame.attack_label = distance_m(frame.lbs_position, *frame.ground_truth) > 30.0;
    }
  }
  return out;
}

SimResult simulate_scenario(const ScenarioConfig& cfg, const NoiseModel& noise,
                            const RangingModelParams& ranging,
                            std::span<const AttackConfig> attacks) {
  BenignScenario benign = generate_benign_trace(cfg, noise, ranging);
  const EnuFrame enu(cfg.waypoints.front());

  SimParams params;
  params.ranging = ranging;
  params.noise = noise;
  params.wifi_radius_m = cfg.wifi_radius_m;
  params.bt_radius_m = cfg.bt_radius_m;
  params.cell_radius_m = cfg.cell_radius_m;

  // Truth positions per epoch, for materializing offset spoof traces.
  SimResult result;
  result.db = std::move(benign.db);

  AttackSchedule schedule;
  std::mt19937_64 place_rng(splitmix64(cfg.geometry_seed ^ 0x5F00F5ULL));
  std::uniform_real_distribution<double> lateral(-80.0, 80.0);

  for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
    const AttackConfig& acfg = attacks[ai];
    AttackEntry entry;
    entry.kind = acfg.kind;
    entry.start_s = acfg.start_s;
    entry.end_s = acfg.end_s;
    entry.constellations = acfg.constellations;
    entry.added_delay_ms = acfg.added_delay_ms;

    if (has_spoof_trace(acfg.kind)) {
      for (const TraceFrame& f : benign.frames) {
        if (f.timestamp_s < acfg.start_s || f.timestamp_s > acfg.end_s || !f.ground_truth) {
          continue;
        }
        double scale = 1.0;
        if (acfg.mode == SpoofMode::kRamp) {
          scale = (f.timestamp_s - acfg.start_s) /
                  std::max(acfg.end_s - acfg.start_s, 1e-9);
        }
        const Eigen::Vector3d spoof_enu =
            enu.to_enu(*f.ground_truth).vec() + scale * acfg.offset_enu;
        entry.spoof_trace.push_back(enu.to_geodetic(EnuPoint(spoof_enu)));
      }
      if (entry.spoof_trace.empty()) {
        throw ScheduleOutOfRange("attack window covers no epochs");
      }

      // Replay anchors live near the spoof trace: the geolocation database
      // knows them at their true (remote) positions.
      struct ReplayPlan {
        Infrastructure infra;
        int count;
        const char* prefix;
      };
      const ReplayPlan plans[] = {
          {Infrastructure::kWifi, acfg.replay_wifi, "wifi_r"},
          {Infrastructure::kCellular, acfg.replay_cell, "cell_r"},
          {Infrastructure::kBluetooth, acfg.replay_bt, "bt_r"},
      };
      const bool network_replay =
          acfg.kind == AttackKind::kWifiReplay || acfg.kind == AttackKind::kCoordinated;
      if (network_replay) {
        for (const ReplayPlan& plan : plans) {
          if (acfg.kind == AttackKind::kWifiReplay && plan.infra != Infrastructure::kWifi) {
            continue;
          }
          for (int i = 0; i < plan.count; ++i) {
            const std::size_t ti =
                entry.spoof_trace.size() * (i + 1) / (plan.count + 1);
            const GeodeticPosition near =
                entry.spoof_trace[std::min(ti, entry.spoof_trace.size() - 1)];
            const EnuFrame local(near);
            const double scale = plan.infra == Infrastructure::kCellular ? 8.0 : 1.0;
            AnchorRecord a;
            char id[32];
            std::snprintf(id, sizeof(id), "%s%zu_%02d", plan.prefix, ai, i);
            a.anchor_id = id;
            a.infrastructure = plan.infra;
            a.mobility = Mobility::kFixed;
            a.name = std::string("net_") + id;
            a.position = local.to_geodetic(
                EnuPoint(lateral(place_rng) * scale, lateral(place_rng) * scale, 0.0));
            result.db.insert(a);
            entry.replay_anchors[static_cast<int>(plan.infra)].push_back(a.anchor_id);
          }
        }
      }
    }
    schedule.entries.push_back(std::move(entry));
  }

  result.frames = apply_attack(benign.frames, schedule, result.db, params,
                               splitmix64(cfg.rng_seed ^ 0xD15EA5EULL));
  result.schedule = std::move(schedule);
  return result;
}

}  // namespace oppraim
