#include "oppraim/detector.hpp"

#include <algorithm>
#include <cmath>
#include <execution>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace oppraim {

namespace {
constexpr double kQuietNan = std::numeric_limits<double>::quiet_NaN();
}

void validate(const DetectorConfig& cfg) {
  if (cfg.window < cfg.poly_order + 1) {
    throw ConfigInvalid("detector: window must be >= poly_order + 1");
  }
  if (!(cfg.eps_t.minCoeff() > 0.0)) throw ConfigInvalid("detector: eps_t must be positive");
  if (!(cfg.lambda_f > 0.0 && cfg.lambda_f < 1.0)) {
    throw ConfigInvalid("detector: lambda_f must lie in (0, 1)");
  }
  if (!(cfg.kernel_coeff > 0.0)) throw ConfigInvalid("detector: kernel_coeff must be positive");
  if (cfg.poly_order < 0) throw ConfigInvalid("detector: poly_order must be >= 0");
  if (!(cfg.sigma_floor_m > 0.0)) throw ConfigInvalid("detector: sigma_floor must be positive");
}

PlatformState propagate_state(const PlatformState& prev, const MotionSample& motion, double dt) {
  const Eigen::Matrix3d r = rotation_matrix(motion.orientation);
  PlatformState next;
  next.position_enu = prev.position_enu + r * prev.velocity_mps * dt +
                      0.5 * r * motion.acceleration_mps2 * dt * dt;
  next.velocity_mps = prev.velocity_mps + motion.acceleration_mps2 * dt;
  return next;
}

double regression_kernel(double delta_epochs, int window, double coeff) {
  const double z = delta_epochs / window;
  return std::exp(-coeff * z * z);
}

namespace {

struct AxisFit {
  double value = 0.0;
  Eigen::VectorXd coeffs;
  int active = 0;
};

// min a'Ha - 2g'a, optionally subject to c'a = b (one active bound).
AxisFit solve_axis(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& c,
                   bool constrained, double center, double eps) {
  AxisFit fit;
  fit.coeffs = h.ldlt().solve(g);
  fit.value = c.dot(fit.coeffs);
  if (!constrained || std::abs(fit.value - center) <= eps) return fit;

  const double bound = fit.value > center ? center + eps : center - eps;
  fit.active = fit.value > center ? 1 : -1;
  const int n = static_cast<int>(g.size());
  Eigen::MatrixXd kkt(n + 1, n + 1);
  kkt.setZero();
  kkt.topLeftCorner(n, n) = 2.0 * h;
  kkt.topRightCorner(n, 1) = c;
  kkt.bottomLeftCorner(1, n) = c.transpose();
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = 2.0 * g;
  rhs[n] = bound;
  const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
  fit.coeffs = sol.head(n);
  fit.value = bound;  // the equality holds exactly
  return fit;
}

}  // namespace

SmoothResult smooth_position(const SmoothProblem& problem) {
  const int points = static_cast<int>(problem.x.size());
  const int terms = problem.order + 1;
  if (points < terms) {
    throw InsufficientHistory("smooth_position: " + std::to_string(points) + " points for order " +
                              std::to_string(problem.order));
  }

  Eigen::MatrixXd basis(points, terms);
  for (int i = 0; i < points; ++i) {
    double p = 1.0;
    for (int k = 0; k < terms; ++k) {
      basis(i, k) = p;
      p *= problem.x[i];
    }
  }
  Eigen::VectorXd c(terms);
  {
    double p = 1.0;
    for (int k = 0; k < terms; ++k) {
      c[k] = p;
      p *= problem.x_eval;
    }
  }

  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(problem.weight.data(), points);
  const Eigen::MatrixXd wb = w.asDiagonal() * basis;
  const Eigen::MatrixXd h = basis.transpose() * wb;

  SmoothResult out;
  out.residuals.resize(3, points);
  for (int axis = 0; axis < 3; ++axis) {
    Eigen::VectorXd y(points);
    for (int i = 0; i < points; ++i) y[i] = problem.y[i][axis];
    const Eigen::VectorXd g = wb.transpose() * y;
    const AxisFit fit = solve_axis(h, g, c, problem.constrained, problem.center[axis],
                                   problem.eps[axis]);
    out.value[axis] = fit.value;
    out.active[axis] = fit.active;
    const Eigen::VectorXd res = y - basis * fit.coeffs;
    out.residuals.row(axis) = res.transpose();
    out.objective[axis] = res.cwiseProduct(w.cwiseSqrt()).squaredNorm();
  }
  return out;
}

Eigen::Vector3d assemble_sigma(const PositionEstimate& estimate,
                               const Eigen::Matrix3Xd& regression_residuals, double floor_m) {
  Eigen::Vector3d sigma;
  for (int axis = 0; axis < 3; ++axis) {
    double s = estimate.sigma_enu_m[axis];
    if (!(s > 0.0) && regression_residuals.cols() > 0) {
      s = std::sqrt(regression_residuals.row(axis).squaredNorm() /
                    static_cast<double>(regression_residuals.cols()));
    }
    sigma[axis] = std::max(s, floor_m);
  }
  return sigma;
}

double log_position_kernel(const Eigen::Vector3d& p, const SmoothedEstimate& est) {
  double sum = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double z = (p[axis] - est.position[axis]) / est.sigma[axis];
    sum += z * z;
  }
  return -sum / 6.0;  // geometric mean of the three per-axis factors
}

double position_kernel(const Eigen::Vector3d& p, const SmoothedEstimate& est) {
  return std::exp(log_position_kernel(p, est));
}

double composite_likelihood(std::span<const SmoothedEstimate> estimates,
                            const Eigen::Vector3d& lbs_enu) {
  if (estimates.empty()) throw NoEstimates("composite_likelihood: no estimates");
  std::array<double, kInfrastructureCount> log_sum{};
  std::array<int, kInfrastructureCount> count{};
  for (const SmoothedEstimate& est : estimates) {
    const int m = static_cast<int>(est.infrastructure);
    log_sum[m] += log_position_kernel(lbs_enu, est);
    ++count[m];
  }
  double total = 0.0;
  int present = 0;
  for (int m = 0; m < kInfrastructureCount; ++m) {
    if (count[m] == 0) continue;
    total += log_sum[m] / count[m];
    ++present;
  }
  const double f = -std::expm1(total / present);
  // The construction is strictly below 1; keep it so in floating point.
  return std::min(f, std::nextafter(1.0, 0.0));
}

DetectionVerdict detect(double timestamp_s, std::span<const SmoothedEstimate> estimates,
                        const Eigen::Vector3d& lbs_enu, const DetectorConfig& cfg) {
  DetectionVerdict v;
  v.timestamp_s = timestamp_s;
  v.infra_log_kernel.fill(kQuietNan);
  v.estimate_count = static_cast<int>(estimates.size());
  if (estimates.empty()) {
    v.indeterminate = true;
    v.f_t = kQuietNan;
    return v;
  }
  std::array<double, kInfrastructureCount> log_sum{};
  std::array<int, kInfrastructureCount> count{};
  for (const SmoothedEstimate& est : estimates) {
    const int m = static_cast<int>(est.infrastructure);
    const double lk = log_position_kernel(lbs_enu, est);
    log_sum[m] += lk;
    ++count[m];
    if (cfg.keep_diagnostics) v.kernels.emplace_back(est.stream_key, std::exp(lk));
  }
  double total = 0.0;
  int present = 0;
  for (int m = 0; m < kInfrastructureCount; ++m) {
    if (count[m] == 0) continue;
    v.infra_log_kernel[m] = log_sum[m] / count[m];
    total += v.infra_log_kernel[m];
    ++present;
  }
  v.f_t = std::min(-std::expm1(total / present), std::nextafter(1.0, 0.0));
  v.attack = v.f_t > cfg.lambda_f;
  return v;
}

double calibrate_threshold(std::span<const double> benign_ft, ThresholdMethod method,
                           double param) {
  if (benign_ft.size() < 30) {
    throw InsufficientSamples("calibrate_threshold: need >= 30 samples, got " +
                              std::to_string(benign_ft.size()));
  }
  if (method == ThresholdMethod::kZScore) {
    const double n = static_cast<double>(benign_ft.size());
    double mean = 0.0;
    for (double f : benign_ft) mean += f;
    mean /= n;
    double var = 0.0;
    for (double f : benign_ft) var += (f - mean) * (f - mean);
    var /= std::max(1.0, n - 1.0);
    const double lambda = mean + param * std::sqrt(var);
    return std::clamp(lambda, 1e-9, 1.0 - 1e-9);
  }
  std::vector<double> sorted(benign_ft.begin(), benign_ft.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(param, 0.0, 1.0) * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - lo;
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// --- pipeline ---

struct DetectorPipeline::Impl {
  DetectorConfig cfg;
  SamplingPolicy sampling;
  RangingModelParams ranging;
  const AnchorDatabase* db;
  EnuFrame enu;

  struct StreamState {
    std::deque<std::pair<int, Eigen::Vector3d>> history;  // (epoch, raw ENU)
    int last_seen = -1;
  };
  std::unordered_map<std::string, StreamState> streams;
  std::deque<std::pair<int, Eigen::Vector3d>> fused;  // complement source
  std::optional<MotionSample> prev_motion;
  double prev_timestamp = 0.0;
  int epoch = -1;
  long long solves = 0;
  std::vector<SmoothedEstimate> last_estimates;
  std::optional<Eigen::Vector3d> last_fused;

  Impl(DetectorConfig c, SamplingPolicy s, RangingModelParams r, const AnchorDatabase* d,
       const GeodeticPosition& origin)
      : cfg(c), sampling(s), ranging(r), db(d), enu(origin) {
    validate(cfg);
  }

  const Eigen::Vector3d* fused_at(int e) const {
    for (auto it = fused.rbegin(); it != fused.rend(); ++it) {
      if (it->first == e) return &it->second;
      if (it->first < e) break;
    }
    return nullptr;
  }

  DetectionVerdict process(const TraceFrame& frame);
};

DetectionVerdict DetectorPipeline::Impl::process(const TraceFrame& frame) {
  ++epoch;
  const double dt = epoch == 0 ? 1.0 : std::max(1e-3, frame.timestamp_s - prev_timestamp);

  // Motion-propagated platform state from the fused track.
  std::optional<PlatformState> predicted;
  if (last_fused && prev_motion) {
    predicted = propagate_state({*last_fused, prev_motion->velocity_mps}, *prev_motion, dt);
  }

  SamplingPolicy epoch_policy = sampling;
  epoch_policy.rng_seed = splitmix64(sampling.rng_seed ^ (0x5bd1e995ULL + epoch));
  const std::vector<SubsetSpec> subsets =
      build_epoch_subsets(frame, *db, ranging, enu, epoch_policy);

  PositioningContext ctx;
  ctx.db = db;
  ctx.enu_frame = &enu;
  ctx.ranging = ranging;
  ctx.fixed_up_m = predicted ? predicted->position_enu.z() : 0.0;
  if (last_fused) {
    const EcefPosition e = enu.to_ecef(EnuPoint(*last_fused));
    ctx.gnss_init = e;
  } else {
    ctx.gnss_init = enu.to_ecef(EnuPoint(0.0, 0.0, 0.0));
  }

  PositionBatch batch = position_subsets(frame, subsets, ctx);
  solves += batch.solves_attempted;

  // Get-or-create stream states serially, then smooth in parallel.
  const std::size_t n = batch.estimates.size();
  std::vector<StreamState*> stream_ptr(n);
  for (std::size_t i = 0; i < n; ++i) stream_ptr[i] = &streams[batch.keys[i]];

  last_estimates.assign(n, SmoothedEstimate{});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto smooth_one = [&](std::size_t i) {
    const PositionEstimate& est = batch.estimates[i];
    const StreamState& stream = *stream_ptr[i];
    SmoothedEstimate out;
    out.infrastructure = est.infrastructure;
    out.stream_key = batch.keys[i];

    SmoothProblem problem;
    problem.order = cfg.poly_order;
    const int begin = epoch - cfg.window;
    auto hist_it = stream.history.begin();
    for (int e = begin; e < epoch; ++e) {
      while (hist_it != stream.history.end() && hist_it->first < e) ++hist_it;
      const Eigen::Vector3d* pos = nullptr;
      if (hist_it != stream.history.end() && hist_it->first == e) {
        pos = &hist_it->second;
      } else {
        pos = fused_at(e);  // complement missing subset positions
      }
      if (pos == nullptr) continue;
      problem.x.push_back(static_cast<double>(e - begin) / cfg.window);
      problem.y.push_back(*pos);
      problem.weight.push_back(regression_kernel(epoch - e, cfg.window, cfg.kernel_coeff));
    }
    problem.x.push_back(1.0);
    problem.y.push_back(est.enu_m);
    problem.weight.push_back(1.0);
    problem.x_eval = 1.0;

    // Constraint center: the previous subset position (complemented when
    // missing) propagated through the motion state.
    if (prev_motion) {
      const Eigen::Vector3d* prev_pos = nullptr;
      if (!stream.history.empty() && stream.history.back().first == epoch - 1) {
        prev_pos = &stream.history.back().second;
      } else {
        prev_pos = fused_at(epoch - 1);
      }
      if (prev_pos != nullptr) {
        const PlatformState bar =
            propagate_state({*prev_pos, prev_motion->velocity_mps}, *prev_motion, dt);
        problem.center = bar.position_enu;
        problem.eps = cfg.eps_t;
        problem.constrained = true;
      }
    }

    Eigen::Matrix3Xd residuals(3, 0);
    if (static_cast<int>(problem.x.size()) >= cfg.poly_order + 1) {
      const SmoothResult smoothed = smooth_position(problem);
      out.position = smoothed.value;
      residuals = smoothed.residuals;
    } else {
      out.position = est.enu_m;  // warm-up: pass the raw estimate through
    }
    out.sigma = assemble_sigma(est, residuals, cfg.sigma_floor_m);
    last_estimates[i] = std::move(out);
  };

  std::for_each(std::execution::par, order.begin(), order.end(), smooth_one);

  const Eigen::Vector3d lbs_enu = enu.to_enu(frame.lbs_position).vec();
  DetectionVerdict verdict = detect(frame.timestamp_s, last_estimates, lbs_enu, cfg);
  verdict.solves_attempted = batch.solves_attempted;

  // Fused position: per-axis maximizer of the kernel product, weights
  // (1/L_m) / sigma^2.
  std::optional<Eigen::Vector3d> fused_now;
  if (!last_estimates.empty()) {
    std::array<int, kInfrastructureCount> count{};
    for (const SmoothedEstimate& e : last_estimates) ++count[static_cast<int>(e.infrastructure)];
    Eigen::Vector3d num = Eigen::Vector3d::Zero();
    Eigen::Vector3d den = Eigen::Vector3d::Zero();
    for (const SmoothedEstimate& e : last_estimates) {
      const double lm = count[static_cast<int>(e.infrastructure)];
      for (int axis = 0; axis < 3; ++axis) {
        const double w = 1.0 / (lm * e.sigma[axis] * e.sigma[axis]);
        num[axis] += w * e.position[axis];
        den[axis] += w;
      }
    }
    fused_now = num.cwiseQuotient(den);
  } else if (predicted) {
    fused_now = predicted->position_enu;  // coast on motion
  }

  // Commit epoch state.
  for (std::size_t i = 0; i < n; ++i) {
    StreamState& s = *stream_ptr[i];
    s.history.emplace_back(epoch, batch.estimates[i].enu_m);
    s.last_seen = epoch;
    while (!s.history.empty() && s.history.front().first < epoch - cfg.window) {
      s.history.pop_front();
    }
  }
  if (fused_now) {
    fused.emplace_back(epoch, *fused_now);
    while (!fused.empty() && fused.front().first < epoch - cfg.window) fused.pop_front();
    last_fused = fused_now;
  }
  if ((epoch & 63) == 0) {
    for (auto it = streams.begin(); it != streams.end();) {
      it = it->second.last_seen < epoch - cfg.window - 1 ? streams.erase(it) : std::next(it);
    }
  }
  prev_motion = frame.motion;
  prev_timestamp = frame.timestamp_s;
  return verdict;
}

DetectorPipeline::DetectorPipeline(DetectorConfig cfg, SamplingPolicy sampling,
                                   RangingModelParams ranging, const AnchorDatabase* db,
                                   const GeodeticPosition& enu_origin)
    : impl_(std::make_unique<Impl>(cfg, sampling, ranging, db, enu_origin)) {}

DetectorPipeline::~DetectorPipeline() = default;
DetectorPipeline::DetectorPipeline(DetectorPipeline&&) noexcept = default;
DetectorPipeline& DetectorPipeline::operator=(DetectorPipeline&&) noexcept = default;

DetectionVerdict DetectorPipeline::process(const TraceFrame& frame) {
  return impl_->process(frame);
}

const EnuFrame& DetectorPipeline::enu_frame() const { return impl_->enu; }
const DetectorConfig& DetectorPipeline::config() const { return impl_->cfg; }
const std::vector<SmoothedEstimate>& DetectorPipeline::last_estimates() const {
  return impl_->last_estimates;
}
long long DetectorPipeline::total_solves() const { return impl_->solves; }

GeodeticPosition trace_origin(const std::vector<TraceFrame>& frames) {
  if (frames.empty()) throw EmptyMasterStream("trace_origin: empty trace");
  for (const TraceFrame& f : frames) {
    if (f.ground_truth) return *f.ground_truth;
  }
  return frames.front().lbs_position;
}

std::vector<DetectionVerdict> run_detector(const std::vector<TraceFrame>& frames,
                                           const DetectorConfig& cfg,
                                           const SamplingPolicy& sampling,
                                           const RangingModelParams& ranging,
                                           const AnchorDatabase& db, long long* total_solves) {
  DetectorPipeline pipeline(cfg, sampling, ranging, &db, trace_origin(frames));
  std::vector<DetectionVerdict> verdicts;
  verdicts.reserve(frames.size());
  for (const TraceFrame& f : frames) verdicts.push_back(pipeline.process(f));
  if (total_solves != nullptr) *total_solves = pipeline.total_solves();
  return verdicts;
}

}  // namespace oppraim
