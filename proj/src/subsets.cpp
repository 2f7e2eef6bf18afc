#include "oppraim/subsets.hpp"

#include <algorithm>
#include <atomic>
#include <execution>
#include <map>
#include <random>

namespace oppraim {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string SubsetSpec::key() const {
  std::string k = to_string(infrastructure);
  for (const std::string& m : members) {
    k += '|';
    k += m;
  }
  return k;
}

namespace {

// Emits all size-k combinations of the sorted id list, in lexicographic order.
void emit_combinations(const std::vector<std::string>& ids, int k, Infrastructure m,
                       std::vector<SubsetSpec>& out) {
  const int n = static_cast<int>(ids.size());
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    SubsetSpec spec;
    spec.infrastructure = m;
    spec.members.reserve(k);
    for (int i : idx) spec.members.push_back(ids[i]);
    spec.index = static_cast<int>(out.size());
    out.push_back(std::move(spec));

    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace

std::vector<SubsetSpec> enumerate_network_subsets(std::vector<std::string> ids, Infrastructure m,
                                                  int cap) {
  if (cap > 0 && static_cast<int>(ids.size()) > cap) ids.resize(cap);
  std::sort(ids.begin(), ids.end());
  std::vector<SubsetSpec> out;
  const int n = static_cast<int>(ids.size());
  if (n < 3) return out;
  for (int k = 3; k <= n; ++k) emit_combinations(ids, k, m, out);
  return out;
}

std::vector<SubsetSpec> enumerate_gnss_subsets(std::span<const RangingObservation> gnss_obs) {
  std::map<std::string, int> sat_counts;
  for (const RangingObservation& o : gnss_obs) {
    if (o.constellation) ++sat_counts[to_string(*o.constellation)];
  }
  std::vector<std::string> names;
  for (const auto& [name, count] : sat_counts) names.push_back(name);

  std::vector<SubsetSpec> out;
  const int n = static_cast<int>(names.size());
  for (int k = 1; k <= n; ++k) {
    std::vector<SubsetSpec> combos;
    emit_combinations(names, k, Infrastructure::kGnss, combos);
    for (SubsetSpec& spec : combos) {
      int pooled = 0;
      for (const std::string& c : spec.members) pooled += sat_counts[c];
      if (pooled >= 4) {
        spec.index = static_cast<int>(out.size());
        out.push_back(std::move(spec));
      }
    }
  }
  return out;
}

std::vector<SubsetSpec> sample_subsets(const std::vector<SubsetSpec>& subsets,
                                       const SamplingPolicy& policy) {
  std::mt19937_64 rng(policy.rng_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<SubsetSpec> out;
  std::array<bool, kInfrastructureCount> had_candidates{};
  std::array<bool, kInfrastructureCount> retained{};
  std::array<const SubsetSpec*, kInfrastructureCount> largest{};

  for (const SubsetSpec& s : subsets) {
    const int m = static_cast<int>(s.infrastructure);
    had_candidates[m] = true;
    if (largest[m] == nullptr || s.members.size() > largest[m]->members.size()) largest[m] = &s;
    if (uniform(rng) < policy.rate) {
      out.push_back(s);
      retained[m] = true;
    }
  }
  for (int m = 0; m < kInfrastructureCount; ++m) {
    if (had_candidates[m] && !retained[m]) out.push_back(*largest[m]);
  }
  return out;
}

std::vector<Candidate> resolve_candidates(const TraceFrame& frame, Infrastructure m,
                                          const AnchorDatabase& db,
                                          const RangingModelParams& params,
                                          const EnuFrame& enu_frame) {
  const bool geoip = m == Infrastructure::kGeoip;
  std::map<std::string, double> best;  // per anchor: strongest RSSI / smallest RTT
  for (const RangingObservation& o : frame.obs(m)) {
    auto it = best.find(o.anchor_id);
    if (it == best.end()) {
      best[o.anchor_id] = o.value;
    } else if (geoip ? o.value < it->second : o.value > it->second) {
      it->second = o.value;
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  for (const auto& [id, value] : best) {
    const AnchorRecord* record = db.find(m, id);
    if (record == nullptr || record->mobility == Mobility::kMobile) continue;
    Candidate c;
    c.id = id;
    c.enu = enu_frame.to_enu(record->position).vec();
    c.measurement = value;
    c.distance_m = geoip ? rtt_to_distance(value, params) : rssi_to_distance(value, m, params);
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [geoip](const Candidate& a, const Candidate& b) {
    return geoip ? a.measurement < b.measurement : a.measurement > b.measurement;
  });
  return out;
}

std::vector<SubsetSpec> build_epoch_subsets(const TraceFrame& frame, const AnchorDatabase& db,
                                            const RangingModelParams& params,
                                            const EnuFrame& enu_frame,
                                            const SamplingPolicy& policy) {
  std::vector<SubsetSpec> all;
  for (const SubsetSpec& s : enumerate_gnss_subsets(frame.obs(Infrastructure::kGnss))) {
    all.push_back(s);
  }
  for (Infrastructure m : {Infrastructure::kWifi, Infrastructure::kCellular,
                           Infrastructure::kBluetooth, Infrastructure::kGeoip}) {
    std::vector<std::string> ids;
    for (const Candidate& c : resolve_candidates(frame, m, db, params, enu_frame)) {
      ids.push_back(c.id);
    }
    for (SubsetSpec& s : enumerate_network_subsets(std::move(ids), m, policy.cap)) {
      all.push_back(std::move(s));
    }
  }
  return sample_subsets(all, policy);
}

namespace {

Solved<PositionEstimate> solve_subset(const TraceFrame& frame, const SubsetSpec& spec,
                                      const PositioningContext& ctx,
                                      const std::array<std::map<std::string, const Candidate*>,
                                                       kInfrastructureCount>& lookup) {
  if (spec.infrastructure == Infrastructure::kGnss) {
    std::vector<RangingObservation> pooled;
    for (const RangingObservation& o : frame.obs(Infrastructure::kGnss)) {
      if (!o.constellation) continue;
      const std::string name = to_string(*o.constellation);
      if (std::find(spec.members.begin(), spec.members.end(), name) != spec.members.end()) {
        pooled.push_back(o);
      }
    }
    TrilaterationOptions opt;
    opt.init = ctx.gnss_init;
    auto solved = gnss_trilateration(pooled, *ctx.enu_frame, opt);
    if (solved) {
      solved.value().infrastructure = Infrastructure::kGnss;
      solved.value().subset_index = spec.index;
    }
    return solved;
  }

  const auto& table = lookup[static_cast<int>(spec.infrastructure)];
  std::vector<Eigen::Vector3d> anchors;
  std::vector<double> values;
  anchors.reserve(spec.members.size());
  values.reserve(spec.members.size());
  for (const std::string& id : spec.members) {
    auto it = table.find(id);
    if (it == table.end()) continue;
    anchors.push_back(it->second->enu);
    values.push_back(spec.infrastructure == Infrastructure::kGeoip ? it->second->measurement
                                                                   : it->second->distance_m);
  }

  Solved<PositionEstimate> solved = SolveError::kInsufficientAnchors;
  if (spec.infrastructure == Infrastructure::kGeoip) {
    solved = geoip_position(anchors, values, ctx.ranging, ctx.geoip_table_position,
                            *ctx.enu_frame, {});
  } else {
    WlsOptions opt;
    opt.fixed_up_m = ctx.fixed_up_m;
    solved = geolocation_wls(anchors, values, *ctx.enu_frame, opt);
  }
  if (solved) {
    solved.value().infrastructure = spec.infrastructure;
    solved.value().subset_index = spec.index;
  }
  return solved;
}

}  // namespace

PositionBatch position_subsets(const TraceFrame& frame, std::span<const SubsetSpec> subsets,
                               const PositioningContext& ctx) {
  std::array<std::vector<Candidate>, kInfrastructureCount> candidates;
  std::array<std::map<std::string, const Candidate*>, kInfrastructureCount> lookup;
  for (Infrastructure m : {Infrastructure::kWifi, Infrastructure::kCellular,
                           Infrastructure::kBluetooth, Infrastructure::kGeoip}) {
    const int i = static_cast<int>(m);
    candidates[i] = resolve_candidates(frame, m, *ctx.db, ctx.ranging, *ctx.enu_frame);
    for (const Candidate& c : candidates[i]) lookup[i].emplace(c.id, &c);
  }

  std::vector<Solved<PositionEstimate>> results(subsets.size(), SolveError::kNoConvergence);
  std::vector<std::size_t> order(subsets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto worker = [&](std::size_t i) { results[i] = solve_subset(frame, subsets[i], ctx, lookup); };
  if (ctx.parallel) {
    std::for_each(std::execution::par, order.begin(), order.end(), worker);
  } else {
    std::for_each(order.begin(), order.end(), worker);
  }

  PositionBatch batch;
  batch.solves_attempted = static_cast<int>(subsets.size());
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    if (results[i]) {
      batch.estimates.push_back(std::move(results[i].value()));
      batch.keys.push_back(subsets[i].key());
    } else {
      batch.failures.push_back({subsets[i], results[i].error()});
    }
  }
  return batch;
}

}  // namespace oppraim
