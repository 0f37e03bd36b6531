#include "beamforge/evalsuite.hpp"

#include "beamforge/error.hpp"
#include "beamforge/render.hpp"
#include "beamforge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

namespace beamforge {

namespace {

// Seed streams below a frame or run seed.
enum Stream : std::uint64_t {
  kPhantomStream = 0,
  kNoiseStream = 1,
  kPlacementStream = 2,
  kInitStream = 1,
  kMaskStream = 3,
};

struct Bounds {
  double x0, x1, z0, z1;
};

Bounds pixel_bounds(const ImagingGrid &grid) {
  Bounds b{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Point2 r = grid.pixel(p);
    b.x0 = std::min(b.x0, r.x);
    b.x1 = std::max(b.x1, r.x);
    b.z0 = std::min(b.z0, r.z);
    b.z1 = std::max(b.z1, r.z);
  }
  return b;
}

std::string fmt(double v) {
  if (std::isnan(v))
    return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::optional<RegionSpec> regions_of(const Phantom &ph) {
  const Shape *low = nullptr;
  const Shape *high = nullptr;
  for (const auto &r : ph.regions) {
    if (r.label == "cyst_low_0")
      low = &r.shape;
    if (r.label == "cyst_high_0")
      high = &r.shape;
  }
  if (!low || !high)
    return std::nullopt;
  return RegionSpec{*low, *high};
}

} // namespace

std::string_view target_name(TargetKind t) {
  switch (t) {
  case TargetKind::das:
    return "das";
  case TargetKind::mv:
    return "mv";
  case TargetKind::ebmv:
    return "ebmv";
  }
  return "ebmv";
}

TargetKind parse_target(std::string_view s) {
  if (s == "das")
    return TargetKind::das;
  if (s == "mv")
    return TargetKind::mv;
  if (s == "ebmv")
    return TargetKind::ebmv;
  throw ConfigError("unknown training target '" + std::string(s) + "'");
}

void DatasetConfig::validate() const {
  geometry.validate();
  grid.validate(geometry);
  mv.validate(geometry.aperture_size());
  if (test_frames < 2)
    throw ConfigError("a dataset needs at least 2 held-out frames");
  if (!(speckle_density > 0.0) || !(cyst_radius > 0.0) ||
      !(point_amplitude > 0.0) || max_points < 1 ||
      !(point_background_density >= 0.0) || !(bandwidth > 0.0) ||
      std::isnan(snr_db))
    throw ConfigError("invalid dataset parameters");
}

Point2 grid_point(const ImagingGrid &grid, double u, double v) {
  const double a = grid.lateral.front() + u * (grid.lateral.back() - grid.lateral.front());
  const double b = grid.axial.front() + v * (grid.axial.back() - grid.axial.front());
  if (grid.kind == GridKind::cartesian)
    return {a, b};
  return {b * std::sin(a), b * std::cos(a)};
}

FrameInfo make_frame_phantom(const DatasetConfig &cfg, FrameKind kind,
                             bool standard, std::uint64_t seed, std::string id) {
  FrameInfo info;
  info.id = std::move(id);
  info.kind = kind;

  const Bounds b = pixel_bounds(cfg.grid);
  const double pad = 4.0 * cfg.geometry.wavelength();
  const Rect extent{b.x0 - pad, b.x1 + pad, std::max(b.z0 - pad, 0.0), b.z1 + pad};

  Rng place(derive_seed(seed, kPlacementStream));
  std::uniform_real_distribution<double> inner(0.2, 0.8);

  if (kind == FrameKind::cyst) {
    const Point2 centre = standard ? grid_point(cfg.grid, 0.5, 0.5)
                                   : grid_point(cfg.grid, inner(place), inner(place));
    const Disk cyst{centre, cfg.cyst_radius};
    info.phantom = make_speckle_phantom(extent, cfg.speckle_density,
                                        std::span(&cyst, 1),
                                        derive_seed(seed, kPhantomStream));
    info.regions = regions_of(info.phantom);
    return info;
  }

  if (standard) {
    info.points.push_back(grid_point(cfg.grid, 0.5, 0.5));
  } else {
    const auto count = std::uniform_int_distribution<std::size_t>(1, cfg.max_points)(place);
    for (std::size_t i = 0; i < count; ++i)
      info.points.push_back(grid_point(cfg.grid, inner(place), inner(place)));
  }
  if (cfg.point_background_density > 0.0)
    info.phantom = make_speckle_phantom(extent, cfg.point_background_density, {},
                                        derive_seed(seed, kPhantomStream));
  for (const auto &p : info.points)
    info.phantom.scatterers.push_back({p, cfg.point_amplitude});
  return info;
}

RawChannelData simulate_frame(const DatasetConfig &cfg, const Phantom &phantom,
                              std::uint64_t seed) {
  SimulationOptions opts;
  opts.bandwidth = cfg.bandwidth;
  opts.num_samples = samples_for_grid(cfg.geometry, cfg.grid, cfg.bandwidth);
  RawChannelData raw = simulate_channels(phantom, cfg.geometry, 0.0, 0, opts);
  if (std::isfinite(cfg.snr_db))
    add_noise(raw, channel_rms(raw) * std::pow(10.0, -cfg.snr_db / 20.0),
              derive_seed(seed, kNoiseStream));
  return raw;
}

BeamformedImage target_image(const FocusedFrame &frame, TargetKind target,
                             const MVConfig &mv) {
  switch (target) {
  case TargetKind::das:
    return das(frame, Window::boxcar);
  case TargetKind::mv:
    return mv_beamform(frame, mv, false).first;
  case TargetKind::ebmv:
    return mv_beamform(frame, mv, true).first;
  }
  throw ConfigError("unknown training target");
}

Dataset make_dataset(const DatasetConfig &cfg) {
  cfg.validate();
  Dataset data;
  data.geometry = cfg.geometry;
  data.grid = cfg.grid;

  const std::size_t total = cfg.train_frames + cfg.test_frames;
  for (std::size_t i = 0; i < total; ++i) {
    const bool held_out = i >= cfg.train_frames;
    const std::size_t local = held_out ? i - cfg.train_frames : i;
    const bool standard = held_out && local < 2;
    FrameKind kind;
    if (standard)
      kind = local == 0 ? FrameKind::cyst : FrameKind::point;
    else
      kind = local % 2 == 0 ? FrameKind::point : FrameKind::cyst;

    const std::uint64_t seed = derive_seed(cfg.seed, i);
    const std::string id = (held_out ? "test" : "train") + std::to_string(local);
    FrameInfo info = make_frame_phantom(cfg, kind, standard, seed, id);
    const RawChannelData raw = simulate_frame(cfg, info.phantom, seed);
    TrainingFrame tf;
    tf.input = focus(raw, cfg.geometry, cfg.grid);
    tf.target = target_image(tf.input, cfg.target, cfg.mv).values;

    (held_out ? data.test : data.train).push_back(std::move(tf));
    (held_out ? data.test_info : data.train_info).push_back(std::move(info));
  }
  return data;
}

std::vector<MethodOutput> run_beamformers(const FocusedFrame &frame,
                                          const CompareConfig &cfg,
                                          const MLPParams *able) {
  std::vector<MethodOutput> out;
  auto push = [&](std::string name, BeamformedImage img) {
    img.beamformer = name;
    EnvelopeImage env = envelope(img);
    out.push_back({std::move(name), std::move(img), std::move(env)});
  };
  push("das_boxcar", das(frame, Window::boxcar));
  push("das_hanning", das(frame, Window::hanning));
  push("imap", imap(frame, cfg.imap_iterations));
  push("mv", mv_beamform(frame, cfg.mv, false).first);
  push("ebmv", mv_beamform(frame, cfg.mv, true).first);
  if (able)
    push("able", able_beamform(*able, frame).first);
  return out;
}

MetricRow frame_metrics(const FrameInfo &info, const ImagingGrid &grid,
                        const EnvelopeImage &env, std::string method) {
  MetricRow row;
  row.frame = info.id;
  row.method = std::move(method);
  if (info.kind == FrameKind::point && !info.points.empty()) {
    const Point2 p = info.points.front();
    try {
      row.fwhm_lat = point_fwhm(env, grid, p, ProfileDirection::lateral);
    } catch (const Error &) {
    }
    try {
      row.fwhm_ax = point_fwhm(env, grid, p, ProfileDirection::axial);
    } catch (const Error &) {
    }
    try {
      row.point_peak_db = relative_peak_db(env, grid, p);
    } catch (const Error &) {
    }
  }
  if (info.kind == FrameKind::cyst && info.regions) {
    try {
      row.cnr_db = cnr(env, grid, *info.regions);
    } catch (const Error &) {
    }
  }
  return row;
}

Comparison compare_beamformers(const Dataset &data, const CompareConfig &cfg,
                               const MLPParams *able) {
  Comparison cmp;
  for (std::size_t f = 0; f < data.test.size(); ++f) {
    const TrainingFrame &tf = data.test[f];
    auto outputs = run_beamformers(tf.input, cfg, able);
    for (const auto &o : outputs) {
      MetricRow row = frame_metrics(data.test_info[f], data.grid, o.envelope, o.method);
      row.smsle = normalized_smsle(o.image.values, tf.target, LossConfig{});
      cmp.rows.push_back(std::move(row));
    }
    cmp.outputs.push_back(std::move(outputs));
  }
  return cmp;
}

void write_metrics_csv(std::ostream &os, std::span<const MetricRow> rows) {
  os << "frame,method,fwhm_lat,fwhm_ax,cnr_db,point_peak_db,smsle\n";
  for (const auto &r : rows)
    os << r.frame << ',' << r.method << ',' << fmt(r.fwhm_lat) << ','
       << fmt(r.fwhm_ax) << ',' << fmt(r.cnr_db) << ',' << fmt(r.point_peak_db)
       << ',' << fmt(r.smsle) << '\n';
}

void write_loss_csv(std::ostream &os, std::span<const double> history) {
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    os << e + 1 << ',' << fmt(history[e]) << '\n';
}

std::vector<std::filesystem::path>
write_images(const std::filesystem::path &dir, const Dataset &data,
             std::span<const std::vector<MethodOutput>> outputs,
             double dynamic_range_db) {
  std::vector<std::filesystem::path> paths;
  for (std::size_t f = 0; f < outputs.size(); ++f)
    for (const auto &o : outputs[f]) {
      auto path = dir / (data.test_info.at(f).id + "_" + o.method + ".pgm");
      render(o.envelope, dynamic_range_db, path);
      paths.push_back(std::move(path));
    }
  return paths;
}

Eigen::MatrixXd weight_line(const MLPParams &params, const FocusedFrame &frame,
                            std::size_t iz) {
  if (iz >= frame.num_z)
    throw InvalidInput("depth row out of range");
  Eigen::MatrixXd y(frame.aperture(), frame.num_x);
  for (std::size_t ix = 0; ix < frame.num_x; ++ix)
    y.col(static_cast<Eigen::Index>(ix)) =
        frame.data.col(static_cast<Eigen::Index>(ix * frame.num_z + iz));
  return forward(params, unit_columns(y), false);
}

void write_weight_line_csv(std::ostream &os, const Eigen::MatrixXd &weights,
                           const ImagingGrid &grid) {
  if (static_cast<std::size_t>(weights.cols()) != grid.num_x())
    throw InvalidInput("weight line does not match the grid width");
  os << "lateral";
  for (Eigen::Index n = 0; n < weights.rows(); ++n)
    os << ",w" << n;
  os << '\n';
  for (Eigen::Index ix = 0; ix < weights.cols(); ++ix) {
    os << fmt(grid.lateral[static_cast<std::size_t>(ix)]);
    for (Eigen::Index n = 0; n < weights.rows(); ++n)
      os << ',' << fmt(weights(n, ix));
    os << '\n';
  }
}

MLPParams initial_able(std::size_t aperture, const TrainConfig &cfg,
                       double dropout) {
  Rng rng(derive_seed(cfg.seed, kInitStream));
  const auto widths = able_widths(aperture);
  return MLPParams::glorot(widths, dropout, rng);
}

TrainResult train_able(const Dataset &data, const TrainConfig &cfg,
                       double dropout) {
  if (data.train.empty())
    throw ConfigError("no training frames");
  return train(data.train, initial_able(data.train.front().input.aperture(), cfg, dropout),
               cfg);
}

SubsampleScheme study_scheme(SubsampleKind kind, double rate, std::uint64_t seed) {
  return SubsampleScheme{kind, rate, derive_seed(seed, kMaskStream)};
}

std::vector<SubsampleCondition> standard_conditions(std::span<const double> rates,
                                                    std::uint64_t seed) {
  std::vector<SubsampleCondition> out{{"full", std::nullopt}};
  for (double rate : rates)
    for (SubsampleKind kind : {SubsampleKind::random, SubsampleKind::deterministic}) {
      char label[64];
      std::snprintf(label, sizeof label, "%s_%g", std::string(subsample_kind_name(kind)).c_str(),
                    100.0 * rate);
      out.push_back({label, study_scheme(kind, rate, seed)});
    }
  return out;
}

std::vector<TwoStageFrame> two_stage_frames(std::span<const TrainingFrame> frames,
                                            const ArrayGeometry &geom,
                                            std::span<const std::uint8_t> mask) {
  std::vector<TwoStageFrame> out;
  out.reserve(frames.size());
  for (const auto &tf : frames) {
    FocusedFrame masked = tf.input;
    if (!mask.empty())
      apply_mask(masked, mask);
    TwoStageFrame f;
    f.blocks = split_transmits(masked, geom.num_transmits());
    f.target = tf.target;
    f.num_x = masked.num_x;
    f.num_z = masked.num_z;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<ConditionResult>
subsample_study(const Dataset &data, std::span<const SubsampleCondition> conditions,
                const TrainConfig &cfg, double dropout) {
  if (data.geometry.plane_wave())
    throw ConfigError("the subsampling study needs a synthetic-aperture geometry");
  const std::size_t transmits = data.geometry.num_transmits();
  std::vector<ConditionResult> results;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    const auto &cond = conditions[c];
    ConditionResult res;
    res.label = cond.label;
    if (cond.scheme)
      res.mask = make_aperture_mask(*cond.scheme, data.geometry);
    const auto train_frames = two_stage_frames(data.train, data.geometry, res.mask);
    const auto test_frames = two_stage_frames(data.test, data.geometry, res.mask);

    const std::size_t active = static_cast<std::size_t>(train_frames.front().blocks.front().rows());
    Rng init(derive_seed(derive_seed(cfg.seed, kInitStream), c));
    TwoStageParams params = TwoStageParams::glorot(active, transmits, dropout, init);
    auto trained = train_two_stage(train_frames, std::move(params), cfg);
    res.params = std::move(trained.params);
    res.loss_history = std::move(trained.loss_history);
    res.heldout = evaluate_two_stage(res.params, test_frames, cfg.loss);

    for (std::size_t f = 0; f < test_frames.size(); ++f) {
      const auto &tf = test_frames[f];
      BeamformedImage img = two_stage_beamform(res.params, tf.blocks, tf.num_x, tf.num_z);
      EnvelopeImage env = envelope(img);
      MetricRow row = frame_metrics(data.test_info[f], data.grid, env, res.label);
      row.smsle = two_stage_loss(res.params, tf, cfg.loss).smsle;
      res.rows.push_back(std::move(row));
      res.outputs.push_back({res.label, std::move(img), std::move(env)});
    }
    results.push_back(std::move(res));
  }
  return results;
}

} // namespace beamforge
