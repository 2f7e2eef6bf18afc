#pragma once

#include <cstdint>
#include <random>

#include "oppraim/positioning.hpp"

namespace oppraim {

struct SatelliteSpec {
  std::string id;
  Constellation constellation = Constellation::kGps;
  EcefPosition ecef;
};

struct ScenarioConfig {
  std::vector<GeodeticPosition> waypoints;
  double speed_mps = 1.5;
  double epoch_rate_hz = 1.0;
  int max_epochs = 0;  // 0 = run the whole path

  int satellite_count = 12;
  std::uint64_t geometry_seed = 7;

  int wifi_count = 8;
  double wifi_spread_m = 120.0;
  int cell_count = 5;
  double cell_spread_m = 1500.0;
  int bt_count = 6;
  double bt_spread_m = 80.0;
  int geoip_count = 12;
  double geoip_min_km = 300.0;
  double geoip_max_km = 3000.0;

  double wifi_radius_m = 300.0;
  double bt_radius_m = 300.0;
  double cell_radius_m = 5000.0;

  std::uint64_t rng_seed = 42;
};

struct NoiseModel {
  double pseudorange_sigma_m = 3.0;
  double clock_walk_m_per_sqrt_s = 5.0;
  double shadowing_sigma_db = 4.0;
  double rtt_jitter_ms = 5.0;
  double rtt_base_latency_ms = 10.0;
  double lbs_sigma_m = 2.0;
  double velocity_sigma_mps = 0.05;
  double accel_sigma_mps2 = 0.05;
  double orientation_sigma_deg = 0.5;
};

void validate(const ScenarioConfig& cfg);
void validate(const NoiseModel& noise);

enum class AttackKind : int {
  kGnssJam = 0,
  kGnssSpoof = 1,
  kWifiReplay = 2,
  kCoordinated = 3,
  kGeoipDelay = 4,
};

const char* to_string(AttackKind k);
std::optional<AttackKind> attack_kind_from_string(const std::string& s);

enum class SpoofMode { kStep, kRamp };

// Config-level description; the spoof trace is materialized against the
// benign ground truth.
struct AttackConfig {
  AttackKind kind = AttackKind::kCoordinated;
  double start_s = 0.0;
  double end_s = 0.0;
  Eigen::Vector3d offset_enu{600.0, 0.0, 0.0};
  SpoofMode mode = SpoofMode::kStep;
  std::vector<Constellation> constellations;  // empty = all present
  int replay_wifi = 5;
  int replay_cell = 3;
  int replay_bt = 3;
  double added_delay_ms = 0.0;
};

struct AttackEntry {
  AttackKind kind = AttackKind::kCoordinated;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<GeodeticPosition> spoof_trace;  // one point per epoch in window
  std::vector<Constellation> constellations;
  std::array<std::vector<std::string>, kInfrastructureCount> replay_anchors;
  double added_delay_ms = 0.0;
};

struct AttackSchedule {
  std::vector<AttackEntry> entries;
};

struct SimParams {
  RangingModelParams ranging;
  NoiseModel noise;
  double wifi_radius_m = 300.0;
  double bt_radius_m = 300.0;
  double cell_radius_m = 5000.0;
};

// --- observation synthesis ---

std::vector<RangingObservation> synth_gnss_observations(const GeodeticPosition& truth,
                                                        double clock_bias_m,
                                                        std::span<const SatelliteSpec> sats,
                                                        const NoiseModel& noise,
                                                        std::mt19937_64& rng);

std::vector<RangingObservation> synth_network_observations(const GeodeticPosition& truth,
                                                           std::span<const AnchorRecord> anchors,
                                                           const SimParams& params,
                                                           std::mt19937_64& rng);

std::vector<RangingObservation> synth_geoip_observations(const GeodeticPosition& truth,
                                                         std::span<const AnchorRecord> servers,
                                                         const SimParams& params,
                                                         std::mt19937_64& rng);

// --- scenario generation ---

struct BenignScenario {
  std::vector<TraceFrame> frames;
  AnchorDatabase db;
  std::vector<SatelliteSpec> satellites;
};

BenignScenario generate_benign_trace(const ScenarioConfig& cfg, const NoiseModel& noise,
                                     const RangingModelParams& ranging);

// Observation-level attack injection; identity outside every window.
std::vector<TraceFrame> apply_attack(const std::vector<TraceFrame>& frames,
                                     const AttackSchedule& schedule, const AnchorDatabase& db,
                                     const SimParams& params, std::uint64_t rng_seed);

struct SimResult {
  std::vector<TraceFrame> frames;
  AnchorDatabase db;
  AttackSchedule schedule;
};

// Benign generation, replay-anchor creation, schedule materialization, and
// attack injection in one deterministic call.
SimResult simulate_scenario(const ScenarioConfig& cfg, const NoiseModel& noise,
                            const RangingModelParams& ranging,
                            std::span<const AttackConfig> attacks);

}  // namespace oppraim
