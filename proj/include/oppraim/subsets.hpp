#pragma once

#include <cstdint>
#include <unordered_map>

#include "oppraim/positioning.hpp"

namespace oppraim {

// One ranging-information subset S_l^m(t). GNSS members are constellation
// names; network/GeoIP members are anchor ids.
struct SubsetSpec {
  Infrastructure infrastructure = Infrastructure::kGnss;
  std::vector<std::string> members;  // sorted
  int index = 0;                     // l within the enumeration

  // Stable stream identity across epochs.
  std::string key() const;
};

struct SamplingPolicy {
  double rate = 0.5;
  std::uint64_t rng_seed = 0;
  int cap = 12;  // max anchors considered per infrastructure, strongest first
};

// All anchor combinations of size >= 3 after the cap; ids arrive ordered
// strongest-signal-first, output order is by size then lexicographic.
std::vector<SubsetSpec> enumerate_network_subsets(std::vector<std::string> ids_strongest_first,
                                                  Infrastructure m, int cap = 12);

// All constellation combinations whose pooled satellite count is >= 4.
std::vector<SubsetSpec> enumerate_gnss_subsets(std::span<const RangingObservation> gnss_obs);

// Independent Bernoulli(rate) retention; if a draw would leave an
// infrastructure with candidates empty, its largest subset is force-retained.
std::vector<SubsetSpec> sample_subsets(const std::vector<SubsetSpec>& subsets,
                                       const SamplingPolicy& policy);

// A usable anchor observation resolved against the database.
struct Candidate {
  std::string id;
  Eigen::Vector3d enu = Eigen::Vector3d::Zero();
  double measurement = 0.0;  // RSSI dBm, or RTT ms for GeoIP
  double distance_m = 0.0;   // through the ranging model
};

// Deduplicated, database-resolved candidates sorted strongest-signal-first
// (RSSI descending / RTT ascending).
std::vector<Candidate> resolve_candidates(const TraceFrame& frame, Infrastructure m,
                                          const AnchorDatabase& db,
                                          const RangingModelParams& params,
                                          const EnuFrame& enu_frame);

struct SubsetFailure {
  SubsetSpec spec;
  SolveError error = SolveError::kNoConvergence;
};

struct PositionBatch {
  std::vector<PositionEstimate> estimates;
  std::vector<SubsetFailure> failures;
  std::vector<std::string> keys;  // stream key per estimate, same order
  int solves_attempted = 0;
};

struct PositioningContext {
  const AnchorDatabase* db = nullptr;
  const EnuFrame* enu_frame = nullptr;
  RangingModelParams ranging;
  double fixed_up_m = 0.0;  // motion-propagated altitude for 2-D solvers
  EcefPosition gnss_init{wgs84::kSemiMajorM, 0.0, 0.0};
  std::optional<GeodeticPosition> geoip_table_position;
  bool parallel = true;
};

// Dispatches every subset to its solver; individual failures are recorded and
// skipped, never aborting the epoch.
PositionBatch position_subsets(const TraceFrame& frame, std::span<const SubsetSpec> subsets,
                               const PositioningContext& ctx);

// Enumerate (with cap) then sample, for every infrastructure in the frame.
std::vector<SubsetSpec> build_epoch_subsets(const TraceFrame& frame, const AnchorDatabase& db,
                                            const RangingModelParams& params,
                                            const EnuFrame& enu_frame,
                                            const SamplingPolicy& policy);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace oppraim
