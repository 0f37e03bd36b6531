#pragma once

#include "beamforge/beamform.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/metrics.hpp"
#include "beamforge/neural.hpp"
#include "beamforge/simulate.hpp"
#include "beamforge/train.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace beamforge {

enum class TargetKind { das, mv, ebmv };

std::string_view target_name(TargetKind t);
TargetKind parse_target(std::string_view s);

/// Everything needed to regenerate a simulated dataset bit for bit.
struct DatasetConfig {
  ArrayGeometry geometry;
  ImagingGrid grid;
  std::size_t train_frames = 64;
  std::size_t test_frames = 16;
  double snr_db = 30.0; ///< relative to the noiseless channel RMS; inf = no noise
  double speckle_density = 50.0; ///< scatterers per mm^2
  double cyst_radius = 0.8e-3;
  double point_amplitude = 20.0;
  std::size_t max_points = 3;
  double point_background_density = 0.0; ///< speckle under point targets
  double bandwidth = 0.6;
  TargetKind target = TargetKind::ebmv;
  MVConfig mv;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class FrameKind { point, cyst };

struct FrameInfo {
  std::string id;
  FrameKind kind = FrameKind::point;
  Phantom phantom;
  std::vector<Point2> points; ///< point targets, first one is measured
  std::optional<RegionSpec> regions;
};

/// Held-out frame 0 is the standard cyst frame (cyst at the grid centre) and
/// held-out frame 1 the standard point frame (one point at the grid centre).
/// The remaining frames alternate point / cyst with random placement.
struct Dataset {
  ArrayGeometry geometry;
  ImagingGrid grid;
  std::vector<TrainingFrame> train;
  std::vector<TrainingFrame> test;
  std::vector<FrameInfo> train_info;
  std::vector<FrameInfo> test_info;
};

/// Cartesian point at fractional grid coordinates (u, v) in [0, 1]^2.
Point2 grid_point(const ImagingGrid &grid, double u, double v);

FrameInfo make_frame_phantom(const DatasetConfig &cfg, FrameKind kind,
                             bool standard, std::uint64_t seed, std::string id);
RawChannelData simulate_frame(const DatasetConfig &cfg, const Phantom &phantom,
                              std::uint64_t seed);
BeamformedImage target_image(const FocusedFrame &frame, TargetKind target,
                             const MVConfig &mv);

Dataset make_dataset(const DatasetConfig &cfg);

struct CompareConfig {
  MVConfig mv;
  int imap_iterations = 2;
};

struct MethodOutput {
  std::string method;
  BeamformedImage image;
  EnvelopeImage envelope;
};

/// das_boxcar, das_hanning, imap, mv, ebmv, then able when params are given.
std::vector<MethodOutput> run_beamformers(const FocusedFrame &frame,
                                          const CompareConfig &cfg,
                                          const MLPParams *able);

constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct MetricRow {
  std::string frame;
  std::string method;
  double fwhm_lat = kNotApplicable; ///< m, or rad on polar grids
  double fwhm_ax = kNotApplicable;  ///< m
  double cnr_db = kNotApplicable;
  double point_peak_db = kNotApplicable; ///< first point's peak vs frame max
  double smsle = kNotApplicable;         ///< against the frame's target
};

/// Point frames get FWHM and peak level, cyst frames CNR. Metrics that cannot
/// be evaluated (truncated profile, region off-grid) stay NaN.
MetricRow frame_metrics(const FrameInfo &info, const ImagingGrid &grid,
                        const EnvelopeImage &env, std::string method);

struct Comparison {
  std::vector<MetricRow> rows;
  std::vector<std::vector<MethodOutput>> outputs; ///< per held-out frame
};

Comparison compare_beamformers(const Dataset &data, const CompareConfig &cfg,
                               const MLPParams *able);

void write_metrics_csv(std::ostream &os, std::span<const MetricRow> rows);
void write_loss_csv(std::ostream &os, std::span<const double> history);

/// Writes <dir>/<frame>_<method>.pgm for every output. Returns the paths.
std::vector<std::filesystem::path>
write_images(const std::filesystem::path &dir, const Dataset &data,
             std::span<const std::vector<MethodOutput>> outputs,
             double dynamic_range_db);

/// ABLE weights along depth row iz: N x num_x.
Eigen::MatrixXd weight_line(const MLPParams &params, const FocusedFrame &frame,
                            std::size_t iz);
/// Header "lateral,w0..w{N-1}", then one row per lateral position.
void write_weight_line_csv(std::ostream &os, const Eigen::MatrixXd &weights,
                           const ImagingGrid &grid);

/// Glorot initialisation from derive_seed(cfg.seed, 1), then train.
TrainResult train_able(const Dataset &data, const TrainConfig &cfg,
                       double dropout);
MLPParams initial_able(std::size_t aperture, const TrainConfig &cfg,
                       double dropout);

struct SubsampleCondition {
  std::string label;
  std::optional<SubsampleScheme> scheme; ///< nullopt = fully sampled
};

struct ConditionResult {
  std::string label;
  std::vector<std::uint8_t> mask;
  TwoStageParams params;
  std::vector<double> loss_history;
  LossTerms heldout;
  std::vector<MetricRow> rows;
  std::vector<MethodOutput> outputs; ///< per held-out frame
};

/// Mask scheme of a run with the given global seed.
SubsampleScheme study_scheme(SubsampleKind kind, double rate, std::uint64_t seed);

/// full, random/deterministic at each rate (rate-major), with mask seeds
/// derived from `seed`.
std::vector<SubsampleCondition> standard_conditions(std::span<const double> rates,
                                                    std::uint64_t seed);

/// Two-stage ABLE per condition on subsampled inputs and fully sampled
/// targets. Conditions run in order.
std::vector<ConditionResult>
subsample_study(const Dataset &data, std::span<const SubsampleCondition> conditions,
                const TrainConfig &cfg, double dropout);

std::vector<TwoStageFrame> two_stage_frames(std::span<const TrainingFrame> frames,
                                            const ArrayGeometry &geom,
                                            std::span<const std::uint8_t> mask);

} // namespace beamforge
