#pragma once

#include <deque>
#include <memory>

#include "oppraim/subsets.hpp"

namespace oppraim {

struct PlatformState {
  Eigen::Vector3d position_enu = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity_mps = Eigen::Vector3d::Zero();  // sensor frame
};

struct DetectorConfig {
  int window = 20;       // w, epochs
  double kernel_coeff = 0.3;
  int poly_order = 2;    // n
  Eigen::Vector3d eps_t{5.0, 5.0, 10.0};  // motion tolerance, meters
  double lambda_f = 0.8;
  double sigma_floor_m = 1.0;
  bool keep_diagnostics = false;
};

void validate(const DetectorConfig& cfg);

// State evolution from t-1 to t: p += R v dt + (1/2) R a dt^2, v += a dt.
PlatformState propagate_state(const PlatformState& prev, const MotionSample& motion, double dt);

// Regression kernel K_loc(dt) = exp(-coeff * (dt / w)^2), dt in epochs.
double regression_kernel(double delta_epochs, int window, double coeff);

// One axis of the windowed polynomial regression with a box constraint on the
// evaluation point (a convex QP; at most one bound can bind per axis).
struct SmoothProblem {
  std::vector<double> x;                // rescaled times, ascending, within [0, 1]
  std::vector<Eigen::Vector3d> y;       // positions, ENU
  std::vector<double> weight;           // K_loc values, same length
  double x_eval = 1.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // constraint center (propagated)
  Eigen::Vector3d eps = Eigen::Vector3d::Zero();
  bool constrained = false;
  int order = 2;
};

struct SmoothResult {
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  Eigen::Matrix3Xd residuals;           // y - fit, per axis x point
  Eigen::Vector3d objective = Eigen::Vector3d::Zero();  // weighted SSR per axis
  std::array<int, 3> active{0, 0, 0};   // -1 lower bound bound, +1 upper, 0 free
};

SmoothResult smooth_position(const SmoothProblem& problem);

struct SmoothedEstimate {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // p-hat, ENU
  Eigen::Vector3d sigma = Eigen::Vector3d::Ones();     // sigma-hat, floored
  Infrastructure infrastructure = Infrastructure::kGnss;
  std::string stream_key;
};

// Per-axis sigma: solver value when present, regression residual RMS
// otherwise, floored.
Eigen::Vector3d assemble_sigma(const PositionEstimate& estimate,
                               const Eigen::Matrix3Xd& regression_residuals, double floor_m);

// Peak-normalized Gaussian kernel, aggregated over axes by geometric mean.
double log_position_kernel(const Eigen::Vector3d& p, const SmoothedEstimate& est);
double position_kernel(const Eigen::Vector3d& p, const SmoothedEstimate& est);

// f_t = 1 - (prod_m (prod_l k)^(1/L_m))^(1/M), M counting only infrastructures
// with estimates at t; computed in log space. Throws NoEstimates.
double composite_likelihood(std::span<const SmoothedEstimate> estimates,
                            const Eigen::Vector3d& lbs_enu);

struct DetectionVerdict {
  double timestamp_s = 0.0;
  double f_t = 0.0;  // NaN when indeterminate
  bool attack = false;
  bool indeterminate = false;
  int estimate_count = 0;
  int solves_attempted = 0;
  std::array<double, kInfrastructureCount> infra_log_kernel{};  // NaN when absent
  std::vector<std::pair<std::string, double>> kernels;          // diagnostics
};

DetectionVerdict detect(double timestamp_s, std::span<const SmoothedEstimate> estimates,
                        const Eigen::Vector3d& lbs_enu, const DetectorConfig& cfg);

enum class ThresholdMethod { kZScore, kQuantile };

// Z-score: mean + k*std clamped into (0, 1); quantile: empirical q-quantile.
double calibrate_threshold(std::span<const double> benign_ft, ThresholdMethod method,
                           double param);

// Algorithm state for one trace: per-stream windows, the fused position
// history used to complement missing subset estimates, and the last platform
// state. Feed frames in timestamp order.
class DetectorPipeline {
 public:
  DetectorPipeline(DetectorConfig cfg, SamplingPolicy sampling, RangingModelParams ranging,
                   const AnchorDatabase* db, const GeodeticPosition& enu_origin);
  ~DetectorPipeline();
  DetectorPipeline(DetectorPipeline&&) noexcept;
  DetectorPipeline& operator=(DetectorPipeline&&) noexcept;

  DetectionVerdict process(const TraceFrame& frame);

  const EnuFrame& enu_frame() const;
  const DetectorConfig& config() const;
  // Smoothed estimates produced by the latest process() call.
  const std::vector<SmoothedEstimate>& last_estimates() const;
  long long total_solves() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the pipeline over a whole trace; origin is the first ground-truth fix
// (first LBS fix when truth is absent).
std::vector<DetectionVerdict> run_detector(const std::vector<TraceFrame>& frames,
                                           const DetectorConfig& cfg,
                                           const SamplingPolicy& sampling,
                                           const RangingModelParams& ranging,
                                           const AnchorDatabase& db,
                                           long long* total_solves = nullptr);

GeodeticPosition trace_origin(const std::vector<TraceFrame>& frames);

}  // namespace oppraim
