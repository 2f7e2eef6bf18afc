#include "oppraim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace oppraim {

using nlohmann::json;

const char* to_string(Infrastructure m) {
  switch (m) {
    case Infrastructure::kGnss: return "gnss";
    case Infrastructure::kWifi: return "wifi";
    case Infrastructure::kCellular: return "cell";
    case Infrastructure::kBluetooth: return "bt";
    case Infrastructure::kGeoip: return "geoip";
  }
  return "?";
}

std::optional<Infrastructure> infrastructure_from_string(const std::string& s) {
  for (Infrastructure m : kAllInfrastructures) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

const char* to_string(Constellation c) {
  switch (c) {
    case Constellation::kGps: return "GPS";
    case Constellation::kGalileo: return "GAL";
    case Constellation::kGlonass: return "GLO";
    case Constellation::kBeidou: return "BDS";
  }
  return "?";
}

std::optional<Constellation> constellation_from_string(const std::string& s) {
  for (int i = 0; i < kConstellationCount; ++i) {
    if (s == to_string(static_cast<Constellation>(i))) return static_cast<Constellation>(i);
  }
  return std::nullopt;
}

const char* to_string(Mobility m) {
  switch (m) {
    case Mobility::kFixed: return "fixed";
    case Mobility::kMobile: return "mobile";
    case Mobility::kUnknown: return "unknown";
  }
  return "?";
}

std::optional<Mobility> mobility_from_string(const std::string& s) {
  for (int i = 0; i < 3; ++i) {
    if (s == to_string(static_cast<Mobility>(i))) return static_cast<Mobility>(i);
  }
  return std::nullopt;
}

bool valid(const RangingObservation& o) {
  if (!std::isfinite(o.value) || !std::isfinite(o.timestamp_s)) return false;
  switch (o.infrastructure) {
    case Infrastructure::kGnss:
      return o.value >= 1.8e7 && o.value <= 3.0e7;
    case Infrastructure::kWifi:
    case Infrastructure::kCellular:
    case Infrastructure::kBluetooth:
      return o.value <= 0.0;
    case Infrastructure::kGeoip:
      return o.value >= 0.0;
  }
  return false;
}

bool valid(const MotionSample& m) {
  return m.velocity_mps.allFinite() && m.acceleration_mps2.allFinite() &&
         std::isfinite(m.orientation.roll_deg) && std::isfinite(m.orientation.pitch_deg) &&
         std::isfinite(m.orientation.yaw_deg) && m.acceleration_mps2.norm() <= 50.0;
}

std::size_t TraceFrame::observation_count() const {
  std::size_t n = 0;
  for (const auto& v : observations) n += v.size();
  return n;
}

void AnchorDatabase::insert(AnchorRecord record) {
  const std::pair<int, std::string> key{static_cast<int>(record.infrastructure),
                                        record.anchor_id};
  records_[key] = std::move(record);
}

const AnchorRecord* AnchorDatabase::find(Infrastructure m, const std::string& anchor_id) const {
  auto it = records_.find({static_cast<int>(m), anchor_id});
  return it == records_.end() ? nullptr : &it->second;
}

std::optional<GeodeticPosition> AnchorDatabase::anchor_position(
    Infrastructure m, const std::string& anchor_id) const {
  const AnchorRecord* r = find(m, anchor_id);
  if (r == nullptr) return std::nullopt;
  return r->position;
}

std::vector<AnchorRecord> AnchorDatabase::all() const {
  std::vector<AnchorRecord> out;
  out.reserve(records_.size());
  for (const auto& [key, record] : records_) out.push_back(record);
  return out;
}

void AnchorDatabase::add_geoip_prefix(const std::string& prefix,
                                      const GeodeticPosition& position) {
  geoip_prefixes_.emplace_back(prefix, position);
}

std::optional<GeodeticPosition> AnchorDatabase::lookup_ip(const std::string& ip) const {
  const std::pair<std::string, GeodeticPosition>* best = nullptr;
  for (const auto& entry : geoip_prefixes_) {
    if (ip.rfind(entry.first, 0) == 0 &&
        (best == nullptr || entry.first.size() > best->first.size())) {
      best = &entry;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->second;
}

AnchorDatabase load_anchor_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedTrace("cannot open anchor db: " + path);
  AnchorDatabase db;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("anchor_id,", 0) == 0) continue;  // header
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 6) {
      throw MalformedTrace("anchor db line " + std::to_string(line_no) + ": expected 7 fields");
    }
    AnchorRecord r;
    r.anchor_id = fields[0];
    auto infra = infrastructure_from_string(fields[1]);
    auto mobility = mobility_from_string(fields[5]);
    if (!infra || !mobility) {
      throw MalformedTrace("anchor db line " + std::to_string(line_no) + ": bad enum value");
    }
    r.infrastructure = *infra;
    r.mobility = *mobility;
    try {
      r.position = {std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4])};
    } catch (const std::exception&) {
      throw MalformedTrace("anchor db line " + std::to_string(line_no) + ": bad number");
    }
    if (fields.size() >= 7) r.name = fields[6];
    if (r.mobility == Mobility::kFixed && !valid(r.position)) {
      throw MalformedTrace("anchor db line " + std::to_string(line_no) +
                           ": fixed anchor without valid position");
    }
    db.insert(std::move(r));
  }
  return db;
}

void save_anchor_db(const AnchorDatabase& db, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedTrace("cannot write anchor db: " + path);
  out << "anchor_id,infra,lat,lon,alt,mobility,name\n";
  out.precision(12);
  for (const AnchorRecord& r : db.all()) {
    out << r.anchor_id << ',' << to_string(r.infrastructure) << ',' << r.position.latitude_deg
        << ',' << r.position.longitude_deg << ',' << r.position.altitude_m << ','
        << to_string(r.mobility) << ',' << r.name << '\n';
  }
}

namespace {

json position_record(double t, const char* kind, const GeodeticPosition& p) {
  return json{{"t", t},
              {"kind", kind},
              {"lat", p.latitude_deg},
              {"lon", p.longitude_deg},
              {"alt", p.altitude_m}};
}

GeodeticPosition position_from(const json& j) {
  return {j.at("lat").get<double>(), j.at("lon").get<double>(), j.at("alt").get<double>()};
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
  throw MalformedTrace("trace line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<TraceFrame> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedTrace("cannot open trace: " + path);

  std::vector<TraceFrame> frames;
  TraceFrame current;
  bool have_frame = false;
  bool have_lbs = false;
  std::size_t frame_first_line = 0;

  auto finish_frame = [&](std::size_t line_no) {
    if (!have_frame) return;
    if (!have_lbs) malformed(frame_first_line, "frame without lbs record");
    if (current.observation_count() == 0) {
      malformed(frame_first_line, "frame without any ranging observation");
    }
    if (!frames.empty() && current.timestamp_s <= frames.back().timestamp_s) {
      throw NonMonotonicTimestamps("trace line " + std::to_string(line_no) +
                                   ": non-increasing frame timestamp");
    }
    frames.push_back(std::move(current));
    current = TraceFrame{};
    have_frame = false;
    have_lbs = false;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      malformed(line_no, e.what());
    }
    double t = 0.0;
    std::string kind;
    try {
      t = j.at("t").get<double>();
      kind = j.at("kind").get<std::string>();
    } catch (const json::exception& e) {
      malformed(line_no, e.what());
    }
    if (!std::isfinite(t)) malformed(line_no, "non-finite timestamp");

    if (have_frame && t != current.timestamp_s) finish_frame(line_no);
    if (!have_frame) {
      if (!frames.empty() && t < frames.back().timestamp_s) {
        throw NonMonotonicTimestamps("trace line " + std::to_string(line_no) +
                                     ": timestamp goes backwards");
      }
      current.timestamp_s = t;
      current.motion.timestamp_s = t;
      have_frame = true;
      frame_first_line = line_no;
    }

    try {
      if (kind == "motion") {
        MotionSample m;
        m.timestamp_s = t;
        m.velocity_mps = {j.at("vx").get<double>(), j.at("vy").get<double>(),
                          j.at("vz").get<double>()};
        m.acceleration_mps2 = {j.at("ax").get<double>(), j.at("ay").get<double>(),
                               j.at("az").get<double>()};
        m.orientation = {j.at("roll").get<double>(), j.at("pitch").get<double>(),
                         j.at("yaw").get<double>()};
        if (!valid(m)) malformed(line_no, "motion sample out of range");
        current.motion = m;
      } else if (kind == "gnss") {
        RangingObservation o;
        o.timestamp_s = t;
        o.infrastructure = Infrastructure::kGnss;
        o.anchor_id = j.at("sat").get<std::string>();
        auto c = constellation_from_string(j.at("const").get<std::string>());
        if (!c) malformed(line_no, "unknown constellation");
        o.constellation = c;
        o.value = j.at("pr_m").get<double>();
        o.satellite_ecef = EcefPosition{j.at("sat_x").get<double>(), j.at("sat_y").get<double>(),
                                        j.at("sat_z").get<double>()};
        if (!valid(o)) malformed(line_no, "pseudorange out of range");
        current.obs(Infrastructure::kGnss).push_back(std::move(o));
      } else if (kind == "wifi" || kind == "cell" || kind == "bt") {
        RangingObservation o;
        o.timestamp_s = t;
        o.infrastructure = *infrastructure_from_string(kind);
        o.anchor_id = j.at("anchor").get<std::string>();
        o.value = j.at("rssi_dbm").get<double>();
        if (!valid(o)) malformed(line_no, "rssi out of range");
        current.obs(o.infrastructure).push_back(std::move(o));
      } else if (kind == "geoip") {
        RangingObservation o;
        o.timestamp_s = t;
        o.infrastructure = Infrastructure::kGeoip;
        o.anchor_id = j.at("server").get<std::string>();
        o.value = j.at("rtt_ms").get<double>();
        if (!valid(o)) malformed(line_no, "rtt out of range");
        current.obs(Infrastructure::kGeoip).push_back(std::move(o));
      } else if (kind == "lbs") {
        current.lbs_position = position_from(j);
        if (!valid(current.lbs_position)) malformed(line_no, "lbs position out of range");
        have_lbs = true;
      } else if (kind == "truth") {
        GeodeticPosition p = position_from(j);
        if (!valid(p)) malformed(line_no, "truth position out of range");
        current.ground_truth = p;
      } else {
        malformed(line_no, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      malformed(line_no, e.what());
    }
  }
  finish_frame(line_no + 1);
  return frames;
}

void save_trace(const std::vector<TraceFrame>& frames, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedTrace("cannot write trace: " + path);
  for (const TraceFrame& f : frames) {
    const double t = f.timestamp_s;
    json motion{{"t", t},
                {"kind", "motion"},
                {"vx", f.motion.velocity_mps.x()},
                {"vy", f.motion.velocity_mps.y()},
                {"vz", f.motion.velocity_mps.z()},
                {"ax", f.motion.acceleration_mps2.x()},
                {"ay", f.motion.acceleration_mps2.y()},
                {"az", f.motion.acceleration_mps2.z()},
                {"roll", f.motion.orientation.roll_deg},
                {"pitch", f.motion.orientation.pitch_deg},
                {"yaw", f.motion.orientation.yaw_deg}};
    out << motion.dump() << '\n';
    for (const RangingObservation& o : f.obs(Infrastructure::kGnss)) {
      json rec{{"t", o.timestamp_s}, {"kind", "gnss"},   {"sat", o.anchor_id},
               {"const", to_string(*o.constellation)},   {"pr_m", o.value},
               {"sat_x", o.satellite_ecef->x},           {"sat_y", o.satellite_ecef->y},
               {"sat_z", o.satellite_ecef->z}};
      out << rec.dump() << '\n';
    }
    for (Infrastructure m :
         {Infrastructure::kWifi, Infrastructure::kCellular, Infrastructure::kBluetooth}) {
      for (const RangingObservation& o : f.obs(m)) {
        json rec{
            {"t", o.timestamp_s}, {"kind", to_string(m)}, {"anchor", o.anchor_id},
            {"rssi_dbm", o.value}};
        out << rec.dump() << '\n';
      }
    }
    for (const RangingObservation& o : f.obs(Infrastructure::kGeoip)) {
      json rec{{"t", o.timestamp_s}, {"kind", "geoip"}, {"server", o.anchor_id},
               {"rtt_ms", o.value}};
      out << rec.dump() << '\n';
    }
    out << position_record(t, "lbs", f.lbs_position).dump() << '\n';
    if (f.ground_truth) out << position_record(t, "truth", *f.ground_truth).dump() << '\n';
  }
}

namespace {

template <typename T>
void require_sorted(const std::vector<T>& v, const char* name) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].timestamp_s < v[i - 1].timestamp_s) {
      throw NonMonotonicTimestamps(std::string("align_epochs: ") + name + " stream not sorted");
    }
  }
}

}  // namespace

std::vector<TraceFrame> align_epochs(const RawStreams& streams, const AlignmentOptions& opt) {
  require_sorted(streams.motion, "motion");
  require_sorted(streams.gnss, "gnss");
  require_sorted(streams.network, "network");
  require_sorted(streams.geoip, "geoip");

  // Master clock: one epoch per GNSS timestamp; synthetic epochs from motion
  // timestamps keep the clock running through jamming gaps.
  std::vector<double> epochs;
  for (const auto& o : streams.gnss) {
    if (epochs.empty() || o.timestamp_s > epochs.back()) epochs.push_back(o.timestamp_s);
  }
  if (!streams.motion.empty()) {
    const double dt = opt.epoch_interval_s;
    const double motion_start = streams.motion.front().timestamp_s;
    const double motion_end = streams.motion.back().timestamp_s;
    std::vector<double> filled;
    if (epochs.empty()) {
      for (double e = motion_start; e <= motion_end + 1e-9; e += dt) filled.push_back(e);
    } else {
      for (double e = epochs.front() - dt; e >= motion_start - opt.tolerance_s; e -= dt) {
        filled.push_back(e);
      }
      std::reverse(filled.begin(), filled.end());
      for (std::size_t i = 0; i < epochs.size(); ++i) {
        filled.push_back(epochs[i]);
        const double next = i + 1 < epochs.size() ? epochs[i + 1] : motion_end + 0.5 * dt;
        for (double e = epochs[i] + dt; e < next - 0.5 * dt; e += dt) filled.push_back(e);
      }
    }
    epochs = std::move(filled);
  }
  if (epochs.empty()) throw EmptyMasterStream("align_epochs: no GNSS epochs and no motion");

  std::vector<TraceFrame> frames(epochs.size());
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    frames[i].timestamp_s = epochs[i];
    frames[i].motion.timestamp_s = epochs[i];
  }

  // Motion: average acceleration over the epoch window, velocity and
  // orientation from the sample at the epoch end.
  {
    std::size_t lo = 0;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      const double begin = i == 0 ? epochs[0] - opt.epoch_interval_s : epochs[i - 1];
      const double end = epochs[i];
      while (lo < streams.motion.size() && streams.motion[lo].timestamp_s <= begin) ++lo;
      std::size_t hi = lo;
      Eigen::Vector3d acc_sum = Eigen::Vector3d::Zero();
      std::size_t count = 0;
      while (hi < streams.motion.size() && streams.motion[hi].timestamp_s <= end + 1e-9) {
        acc_sum += streams.motion[hi].acceleration_mps2;
        ++count;
        ++hi;
      }
      if (count > 0) {
        const MotionSample& last = streams.motion[hi - 1];
        frames[i].motion.velocity_mps = last.velocity_mps;
        frames[i].motion.orientation = last.orientation;
        frames[i].motion.acceleration_mps2 = acc_sum / static_cast<double>(count);
      } else if (!streams.motion.empty()) {
        // No sample in the window: nearest within tolerance, else zeros.
        auto it = std::lower_bound(streams.motion.begin(), streams.motion.end(), end,
                                   [](const MotionSample& m, double t) { return m.timestamp_s < t; });
        const MotionSample* nearest = nullptr;
        if (it != streams.motion.end()) nearest = &*it;
        if (it != streams.motion.begin() &&
            (nearest == nullptr ||
             end - std::prev(it)->timestamp_s < nearest->timestamp_s - end)) {
          nearest = &*std::prev(it);
        }
        if (nearest != nullptr && std::abs(nearest->timestamp_s - end) <= opt.tolerance_s) {
          frames[i].motion.velocity_mps = nearest->velocity_mps;
          frames[i].motion.orientation = nearest->orientation;
          frames[i].motion.acceleration_mps2 = nearest->acceleration_mps2;
        }
      }
      frames[i].motion.timestamp_s = end;
      lo = hi > 0 ? hi - 1 : 0;
    }
  }

  auto nearest_epoch = [&](double t) -> std::size_t {
    auto it = std::lower_bound(epochs.begin(), epochs.end(), t);
    if (it == epochs.begin()) return 0;
    if (it == epochs.end()) return epochs.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - epochs.begin());
    return (t - epochs[hi - 1] <= epochs[hi] - t) ? hi - 1 : hi;
  };

  // GNSS observations attach to their own epoch.
  for (const RangingObservation& o : streams.gnss) {
    const std::size_t i = nearest_epoch(o.timestamp_s);
    if (std::abs(epochs[i] - o.timestamp_s) <= opt.tolerance_s) {
      frames[i].obs(Infrastructure::kGnss).push_back(o);
    }
  }
  // Network and GeoIP: nearest epoch within tolerance.
  for (const std::vector<RangingObservation>* stream : {&streams.network, &streams.geoip}) {
    for (const RangingObservation& o : *stream) {
      const std::size_t i = nearest_epoch(o.timestamp_s);
      if (std::abs(epochs[i] - o.timestamp_s) <= opt.tolerance_s) {
        frames[i].obs(o.infrastructure).push_back(o);
      }
    }
  }

  // Carry the latest observation set forward per infrastructure, up to the
  // staleness bound, re-stamped to the receiving frame.
  for (Infrastructure m : {Infrastructure::kWifi, Infrastructure::kCellular,
                           Infrastructure::kBluetooth, Infrastructure::kGeoip}) {
    std::vector<RangingObservation> last;
    double last_t = -1e18;
    for (TraceFrame& f : frames) {
      if (!f.obs(m).empty()) {
        last = f.obs(m);
        last_t = f.timestamp_s;
      } else if (!last.empty() && f.timestamp_s - last_t <= opt.staleness_bound_s) {
        for (RangingObservation o : last) {
          o.timestamp_s = f.timestamp_s;
          f.obs(m).push_back(std::move(o));
        }
      }
    }
  }

  // LBS (required) and ground truth (optional): nearest within tolerance,
  // LBS carried forward afterwards.
  std::vector<bool> has_lbs(frames.size(), false);
  for (const auto& [t, p] : streams.lbs) {
    const std::size_t i = nearest_epoch(t);
    if (std::abs(epochs[i] - t) <= opt.tolerance_s) {
      frames[i].lbs_position = p;
      has_lbs[i] = true;
    }
  }
  for (const auto& [t, p] : streams.truth) {
    const std::size_t i = nearest_epoch(t);
    if (std::abs(epochs[i] - t) <= opt.tolerance_s) frames[i].ground_truth = p;
  }

  std::vector<TraceFrame> out;
  out.reserve(frames.size());
  const GeodeticPosition* lbs = nullptr;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (has_lbs[i]) lbs = &frames[i].lbs_position;
    if (lbs == nullptr) continue;           // no LBS fix yet
    if (frames[i].observation_count() == 0) continue;
    frames[i].lbs_position = *lbs;
    out.push_back(std::move(frames[i]));
  }
  return out;
}

CleaningRules CleaningRules::defaults() {
  return {{
      "AndroidAP",
      "iPhone",
      "Galaxy.*Hotspot",
      "DIRECT-",
      // Common transit operator SSID prefixes.
      "^SL[ -]",
      "^SJ[ -]",
      "^MTR[ -]",
      "FlixBus",
      "OnboardWifi",
  }};
}

CleanResult clean_anchors(const AnchorDatabase& db, const CleaningRules& rules) {
  std::vector<std::pair<std::regex, std::string>> compiled;
  compiled.reserve(rules.name_patterns.size());
  for (const std::string& p : rules.name_patterns) {
    compiled.emplace_back(std::regex(p, std::regex::ECMAScript | std::regex::icase), p);
  }

  CleanResult result;
  for (const auto& [prefix, position] : db.geoip_prefixes()) {
    result.db.add_geoip_prefix(prefix, position);
  }
  for (const AnchorRecord& r : db.all()) {
    std::string matched_rule;
    if (r.mobility == Mobility::kMobile) {
      matched_rule = "mobility";
    } else {
      for (const auto& [re, text] : compiled) {
        if (std::regex_search(r.name, re)) {
          matched_rule = text;
          break;
        }
      }
    }
    if (matched_rule.empty()) {
      result.db.insert(r);
    } else {
      result.removed.push_back({r.anchor_id, r.infrastructure, matched_rule});
    }
  }
  return result;
}

}  // namespace oppraim
