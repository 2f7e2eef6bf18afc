#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oppraim/geo.hpp"

namespace oppraim {

// Opportunistic information sources; M = 5.
enum class Infrastructure : int {
  kGnss = 0,
  kWifi = 1,
  kCellular = 2,
  kBluetooth = 3,
  kGeoip = 4,
};
inline constexpr int kInfrastructureCount = 5;
inline constexpr std::array<Infrastructure, kInfrastructureCount> kAllInfrastructures = {
    Infrastructure::kGnss, Infrastructure::kWifi, Infrastructure::kCellular,
    Infrastructure::kBluetooth, Infrastructure::kGeoip};

const char* to_string(Infrastructure m);
std::optional<Infrastructure> infrastructure_from_string(const std::string& s);

enum class Constellation : int { kGps = 0, kGalileo = 1, kGlonass = 2, kBeidou = 3 };
inline constexpr int kConstellationCount = 4;

const char* to_string(Constellation c);
std::optional<Constellation> constellation_from_string(const std::string& s);

// One ranging measurement: meters for GNSS pseudoranges, dBm for RSSI
// infrastructures, milliseconds for GeoIP RTT.
struct RangingObservation {
  double timestamp_s = 0.0;
  Infrastructure infrastructure = Infrastructure::kGnss;
  std::string anchor_id;
  double value = 0.0;
  std::optional<Constellation> constellation;  // GNSS only
  std::optional<EcefPosition> satellite_ecef;  // GNSS only, from the trace
};

bool valid(const RangingObservation& o);

enum class Mobility : int { kFixed = 0, kMobile = 1, kUnknown = 2 };

const char* to_string(Mobility m);
std::optional<Mobility> mobility_from_string(const std::string& s);

struct AnchorRecord {
  std::string anchor_id;
  Infrastructure infrastructure = Infrastructure::kWifi;
  GeodeticPosition position;
  Mobility mobility = Mobility::kFixed;
  std::string name;
};

struct MotionSample {
  double timestamp_s = 0.0;
  Eigen::Vector3d velocity_mps = Eigen::Vector3d::Zero();       // sensor frame
  Eigen::Vector3d acceleration_mps2 = Eigen::Vector3d::Zero();  // sensor frame
  OrientationAngles orientation;
};

bool valid(const MotionSample& m);

// One time-aligned epoch.
struct TraceFrame {
  double timestamp_s = 0.0;
  MotionSample motion;
  std::array<std::vector<RangingObservation>, kInfrastructureCount> observations;
  GeodeticPosition lbs_position;
  std::optional<GeodeticPosition> ground_truth;
  std::optional<bool> attack_label;

  std::vector<RangingObservation>& obs(Infrastructure m) {
    return observations[static_cast<int>(m)];
  }
  const std::vector<RangingObservation>& obs(Infrastructure m) const {
    return observations[static_cast<int>(m)];
  }
  std::size_t observation_count() const;
};

class AnchorDatabase {
 public:
  void insert(AnchorRecord record);
  const AnchorRecord* find(Infrastructure m, const std::string& anchor_id) const;
  std::optional<GeodeticPosition> anchor_position(Infrastructure m,
                                                  const std::string& anchor_id) const;
  std::size_t size() const { return records_.size(); }

  std::vector<AnchorRecord> all() const;

  // Tabulation-based GeoIP: longest matching prefix wins.
  void add_geoip_prefix(const std::string& prefix, const GeodeticPosition& position);
  std::optional<GeodeticPosition> lookup_ip(const std::string& ip) const;
  const std::vector<std::pair<std::string, GeodeticPosition>>& geoip_prefixes() const {
    return geoip_prefixes_;
  }

 private:
  std::map<std::pair<int, std::string>, AnchorRecord> records_;
  std::vector<std::pair<std::string, GeodeticPosition>> geoip_prefixes_;
};

AnchorDatabase load_anchor_db(const std::string& path);
void save_anchor_db(const AnchorDatabase& db, const std::string& path);

// --- trace I/O (aligned traces, one record per line) ---

std::vector<TraceFrame> load_trace(const std::string& path);
void save_trace(const std::vector<TraceFrame>& frames, const std::string& path);

// --- multi-rate alignment ---

struct RawStreams {
  std::vector<MotionSample> motion;                 // ~100 Hz
  std::vector<RangingObservation> gnss;             // ~1 Hz epochs
  std::vector<RangingObservation> network;          // wifi/cell/bt, ~0.3 Hz
  std::vector<RangingObservation> geoip;            // sporadic
  std::vector<std::pair<double, GeodeticPosition>> lbs;
  std::vector<std::pair<double, GeodeticPosition>> truth;
};

struct AlignmentOptions {
  double tolerance_s = 0.5;        // nearest-neighbor attachment
  double staleness_bound_s = 10.0; // carry-forward limit for network/geoip
  double epoch_interval_s = 1.0;   // synthetic epochs while GNSS is jammed
};

std::vector<TraceFrame> align_epochs(const RawStreams& streams,
                                     const AlignmentOptions& options = {});

// --- anchor cleaning ---

struct CleaningRules {
  std::vector<std::string> name_patterns;  // ECMAScript regex, searched in names

  static CleaningRules defaults();
};

struct RemovalLogEntry {
  std::string anchor_id;
  Infrastructure infrastructure;
  std::string rule;  // pattern text or "mobility"
};

struct CleanResult {
  AnchorDatabase db;
  std::vector<RemovalLogEntry> removed;
};

CleanResult clean_anchors(const AnchorDatabase& db, const CleaningRules& rules);

}  // namespace oppraim
