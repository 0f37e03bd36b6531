#include "cli.hpp"

#include "beamforge/complexity.hpp"
#include "beamforge/error.hpp"
#include "beamforge/evalsuite.hpp"
#include "beamforge/render.hpp"
#include "beamforge/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>

namespace beamforge::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char *kUsage =
    "usage: beamforge <simulate|focus|beamform|train|eval|flops|render|pipeline> "
    "[options]  (--help for details)";

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

void add_config_options(CLI::App *sub, ConfigArgs &args, const char *out_help) {
  sub->add_option("--config", args.config, "key=value run configuration")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", args.sets, "override one key, e.g. --set train.epochs=5")
      ->take_all();
  sub->add_option("--out", args.out, out_help);
}

RunConfig load_config(const ConfigArgs &args, std::optional<std::uint64_t> seed) {
  RunConfig cfg = args.config.empty() ? RunConfig{} : RunConfig::from_file(args.config);
  for (const auto &s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (seed)
    cfg.set("seed", std::to_string(*seed));
  if (!args.out.empty())
    cfg.set("output.dir", args.out);
  cfg.resolve();
  return cfg;
}

void write_csv(const fs::path &path, const std::function<void(std::ostream &)> &fn) {
  std::ostringstream os;
  fn(os);
  write_text(path, os.str());
}

// Records the container's geometry and grid so the written config describes
// the data that was actually processed.
void adopt(RunConfig &cfg, const ArrayGeometry &geom, const ImagingGrid &grid) {
  const KeyValues stored = KeyValues::parse(geometry_text(geom));
  for (const auto &[k, v] : stored.entries())
    cfg.set(k, v);
  cfg.set("geometry.grid_kind", grid.kind == GridKind::cartesian ? "cartesian" : "polar");
  cfg.set("geometry.grid_x", std::to_string(grid.num_x()));
  cfg.set("geometry.grid_z", std::to_string(grid.num_z()));
  cfg.set("geometry.extent_m",
          format_double(grid.lateral.front()) + "," + format_double(grid.lateral.back()) +
              "," + format_double(grid.axial.front()) + "," +
              format_double(grid.axial.back()));
}

void write_resolved_beside(RunConfig cfg, const fs::path &output) {
  cfg.resolve();
  write_text(output.string() + ".resolved.cfg", cfg.resolved_text());
}

FrameKind parse_frame_kind(const std::string &s) {
  if (s == "point")
    return FrameKind::point;
  if (s == "cyst")
    return FrameKind::cyst;
  throw ConfigError("unknown phantom kind '" + s + "'");
}

std::size_t point_row(const Dataset &data) {
  for (const auto &info : data.test_info)
    if (info.kind == FrameKind::point && !info.points.empty())
      return data.grid.nearest(info.points.front()).second;
  return data.grid.num_z() / 2;
}

std::size_t first_point_frame(const Dataset &data) {
  for (std::size_t f = 0; f < data.test_info.size(); ++f)
    if (data.test_info[f].kind == FrameKind::point)
      return f;
  return 0;
}

void print_rows(std::ostream &log, std::span<const MetricRow> rows,
                std::string_view frame) {
  for (const auto &r : rows) {
    if (r.frame != frame)
      continue;
    char line[256];
    std::snprintf(line, sizeof line,
                  "  %-6s %-14s fwhm_lat %-10.4g fwhm_ax %-10.4g cnr %-8.3g smsle %.4g\n",
                  r.frame.c_str(), r.method.c_str(), r.fwhm_lat, r.fwhm_ax,
                  r.cnr_db, r.smsle);
    log << line;
  }
}

void compare_pipeline(const RunConfig &cfg, const fs::path &dir, std::ostream &log) {
  const DatasetConfig dcfg = dataset_from(cfg);
  const TrainConfig tcfg = train_from(cfg);
  const double dropout = cfg.get_double("train.dropout");
  const double dr = cfg.get_double("metrics.dynamic_range_db");

  log << "simulating " << dcfg.train_frames << " training and " << dcfg.test_frames
      << " held-out frames\n";
  const Dataset data = make_dataset(dcfg);

  const MLPParams init = initial_able(data.train.front().input.aperture(), tcfg, dropout);
  const double before = evaluate(init, data.test, tcfg.loss).smsle;
  log << "training ABLE for " << tcfg.epochs << " epochs\n";
  const TrainResult trained = train_able(data, tcfg, dropout);
  const double after = evaluate(trained.params, data.test, tcfg.loss).smsle;
  log << "held-out smsle " << before << " -> " << after << "\n";

  const MLPParams stages[] = {trained.params};
  write_container(dir / "model.bft", model_container(stages));
  write_csv(dir / "loss.csv",
            [&](std::ostream &os) { write_loss_csv(os, trained.loss_history); });

  const Comparison cmp = compare_beamformers(data, compare_from(cfg), &trained.params);
  write_csv(dir / "metrics.csv",
            [&](std::ostream &os) { write_metrics_csv(os, cmp.rows); });
  write_images(dir / "images", data, cmp.outputs, dr);

  const std::size_t pf = first_point_frame(data);
  const Eigen::MatrixXd w = weight_line(trained.params, data.test[pf].input, point_row(data));
  write_csv(dir / "weights_line.csv",
            [&](std::ostream &os) { write_weight_line_csv(os, w, data.grid); });

  for (std::size_t f = 0; f < std::min<std::size_t>(2, data.test_info.size()); ++f)
    print_rows(log, cmp.rows, data.test_info[f].id);
}

void subsample_pipeline(const RunConfig &cfg, const fs::path &dir, std::ostream &log) {
  const DatasetConfig dcfg = dataset_from(cfg);
  const TrainConfig tcfg = train_from(cfg);
  const double dr = cfg.get_double("metrics.dynamic_range_db");

  log << "simulating " << dcfg.train_frames << " training and " << dcfg.test_frames
      << " held-out frames\n";
  const Dataset data = make_dataset(dcfg);

  Comparison cmp = compare_beamformers(data, compare_from(cfg), nullptr);
  const auto conditions = conditions_from(cfg);
  const auto results = subsample_study(data, conditions, tcfg, cfg.get_double("train.dropout"));

  std::vector<MetricRow> rows = cmp.rows;
  std::string summary = "condition,active_channels,heldout_smsle\n";
  for (const auto &r : results) {
    const MLPParams stages[] = {r.params.stage1, r.params.stage2};
    write_container(dir / ("model_" + r.label + ".bft"), model_container(stages, r.mask));
    write_csv(dir / ("loss_" + r.label + ".csv"),
              [&](std::ostream &os) { write_loss_csv(os, r.loss_history); });
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    for (std::size_t f = 0; f < r.outputs.size(); ++f)
      cmp.outputs.at(f).push_back(r.outputs[f]);

    std::size_t active = 0;
    for (auto m : r.mask)
      active += m;
    if (r.mask.empty())
      active = data.geometry.aperture_size();
    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%.9g\n", r.label.c_str(), active,
                  r.heldout.smsle);
    summary += line;
    log << "  " << r.label << ": held-out smsle " << r.heldout.smsle << "\n";
  }
  write_text(dir / "subsample.csv", summary);
  write_csv(dir / "metrics.csv", [&](std::ostream &os) { write_metrics_csv(os, rows); });
  write_images(dir / "images", data, cmp.outputs, dr);
}

BeamformedImage beamform_frame(FocusedFrame frame, const ArrayGeometry &geom,
                               const std::string &kind, const RunConfig &cfg,
                               const std::string &model_path) {
  if (kind == "das")
    return das(frame, parse_window(cfg.get("beamformer.window")));
  if (kind == "imap")
    return imap(frame, static_cast<int>(cfg.get_u64("imap.iterations")));
  if (kind == "mv" || kind == "ebmv")
    return mv_beamform(frame, mv_from(cfg), kind == "ebmv").first;
  if (kind == "able") {
    if (model_path.empty())
      throw ConfigError("--beamformer able needs --model");
    const Container model = read_container(model_path);
    const auto stages = read_model(model);
    if (stages.size() == 1)
      return able_beamform(stages.front(), frame).first;
    if (stages.size() != 2)
      throw ConfigError("model has an unsupported number of stages");
    const auto mask = read_model_mask(model);
    if (!mask.empty())
      apply_mask(frame, mask);
    const auto blocks = split_transmits(frame, geom.num_transmits());
    TwoStageParams p{stages[0], stages[1]};
    return two_stage_beamform(p, blocks, frame.num_x, frame.num_z);
  }
  throw ConfigError("unknown beamformer '" + kind + "' (das, imap, mv, ebmv, able)");
}

} // namespace

void pipeline(RunConfig cfg, const fs::path &dir, std::ostream &log) {
  cfg.set("output.dir", dir.string());
  cfg.resolve();
  fs::create_directories(dir);
  cfg.write_resolved(dir);
  if (cfg.experiment() == ExperimentKind::compare)
    compare_pipeline(cfg, dir, log);
  else
    subsample_pipeline(cfg, dir, log);
}

int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Desk-scale ultrasound beamforming toolkit", "beamforge"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "global seed for every stochastic stage");

  // simulate
  ConfigArgs sim_args;
  std::string sim_kind = "point";
  bool sim_random = false;
  auto *sim = app.add_subcommand("simulate", "simulate raw channel data for one phantom");
  add_config_options(sim, sim_args, "output directory (raw.bft, phantom.cfg)");
  sim->add_option("--phantom", sim_kind, "point or cyst")->check(CLI::IsMember({"point", "cyst"}));
  sim->add_flag("--random-placement", sim_random, "seeded target placement instead of the grid centre");

  // focus
  std::string focus_in, focus_out, focus_scheme;
  double focus_rate = 1.0;
  auto *foc = app.add_subcommand("focus", "delay raw channel data onto the imaging grid");
  foc->add_option("--input", focus_in, "raw container")->required()->check(CLI::ExistingFile);
  foc->add_option("--out", focus_out, "frame container")->required();
  foc->add_option("--subsample", focus_scheme, "random or deterministic channel mask")
      ->check(CLI::IsMember({"random", "deterministic"}));
  foc->add_option("--rate", focus_rate, "fraction of active channels")->check(CLI::Range(0.0, 1.0));

  // beamform
  std::string bf_in, bf_out, bf_model, bf_kind = "ebmv", bf_window = "boxcar";
  std::optional<std::size_t> bf_l;
  std::optional<double> bf_d, bf_k;
  std::optional<int> bf_iters;
  auto *bf = app.add_subcommand("beamform", "beamform a focused frame");
  bf->add_option("--input", bf_in, "frame container")->required()->check(CLI::ExistingFile);
  bf->add_option("--out", bf_out, "image container")->required();
  bf->add_option("--beamformer", bf_kind, "das, imap, mv, ebmv or able");
  bf->add_option("--window", bf_window, "DAS window: boxcar, hanning or tukey");
  bf->add_option("--L", bf_l, "MV subaperture length (0 = N/2)");
  bf->add_option("--D", bf_d, "MV diagonal loading");
  bf->add_option("--k", bf_k, "EBMV eigen fraction");
  bf->add_option("--imap-iters", bf_iters, "iMAP iterations");
  bf->add_option("--model", bf_model, "ABLE model container")->check(CLI::ExistingFile);

  // train
  ConfigArgs train_args;
  auto *tr = app.add_subcommand("train", "train ABLE on a simulated dataset");
  add_config_options(tr, train_args, "output directory (model.bft, loss.csv)");

  // eval
  ConfigArgs eval_args;
  std::string eval_model;
  auto *ev = app.add_subcommand("eval", "compare beamformers on held-out frames");
  add_config_options(ev, eval_args, "output directory (metrics.csv, images/)");
  ev->add_option("--model", eval_model, "ABLE model container")->check(CLI::ExistingFile);

  // flops
  std::string fl_method = "able", fl_csv, fl_acc = "b";
  std::vector<std::uint64_t> fl_n{128}, fl_sweep;
  double fl_k = 0.5;
  std::uint64_t fl_iters = 2;
  auto *fl = app.add_subcommand("flops", "per-pixel floating point operation counts");
  fl->add_option("--method", fl_method, "imap, mv, ebmv, able or lower_bound");
  fl->add_option("--n", fl_n, "channel count")->expected(1);
  fl->add_option("--sweep", fl_sweep, "channel counts for every method")->delimiter(',');
  fl->add_option("--csv", fl_csv, "write the sweep as CSV");
  fl->add_option("--k", fl_k, "EBMV eigen fraction");
  fl->add_option("--imap-iters", fl_iters, "iMAP iterations");
  fl->add_option("--accounting", fl_acc, "ABLE accounting: a (literal) or b (first-layer activation)");

  // render
  std::string rd_in, rd_out;
  double rd_dr = 60.0;
  auto *rd = app.add_subcommand("render", "log-compress an image to PGM");
  rd->add_option("--input", rd_in, "image container")->required()->check(CLI::ExistingFile);
  rd->add_option("--out", rd_out, "PGM path")->required();
  rd->add_option("--dr", rd_dr, "dynamic range in dB");

  // pipeline
  ConfigArgs pipe_args;
  auto *pl = app.add_subcommand("pipeline", "simulate, train, evaluate and render from one config");
  add_config_options(pl, pipe_args, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    std::string what = e.what();
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a == "--seed") {
        ++i;
        continue;
      }
      if (a.empty() || a.front() == '-')
        continue;
      if (!app.get_subcommand_no_throw(a))
        what = "unknown subcommand '" + a + "'";
      break;
    }
    err << "error: " << what << "\n" << kUsage << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*sim) {
      const RunConfig cfg = load_config(sim_args, seed);
      const fs::path dir = cfg.get("output.dir");
      DatasetConfig d = dataset_from(cfg);
      const FrameInfo info = make_frame_phantom(d, parse_frame_kind(sim_kind), !sim_random,
                                                cfg.seed(), "frame");
      const RawChannelData raw = simulate_frame(d, info.phantom, cfg.seed());
      fs::create_directories(dir);
      write_container(dir / "raw.bft", raw_container(raw, d.geometry, d.grid));
      write_text(dir / "phantom.cfg", phantom_text(info.phantom));
      cfg.write_resolved(dir);
      out << (dir / "raw.bft").string() << "\n";
    } else if (*foc) {
      RunConfig cfg;
      if (seed)
        cfg.set("seed", std::to_string(*seed));
      const Container raw_c = read_container(focus_in);
      const ArrayGeometry geom = read_geometry(raw_c);
      const ImagingGrid grid = read_grid(raw_c);
      adopt(cfg, geom, grid);
      FocusedFrame frame = focus(read_raw(raw_c), geom, grid);
      if (!focus_scheme.empty()) {
        cfg.set("subsample.schemes", focus_scheme);
        cfg.set("subsample.rates", format_double(focus_rate));
        apply_mask(frame, make_aperture_mask(study_scheme(parse_subsample_kind(focus_scheme),
                                                          focus_rate, cfg.seed()),
                                             geom));
      }
      write_container(focus_out, frame_container(frame, geom, grid));
      write_resolved_beside(cfg, focus_out);
      out << focus_out << "\n";
    } else if (*bf) {
      RunConfig cfg;
      cfg.set("beamformer.kind", bf_kind);
      cfg.set("beamformer.window", bf_window);
      if (bf_l)
        cfg.set("mv.subaperture", std::to_string(*bf_l));
      if (bf_d)
        cfg.set("mv.diagonal_loading", format_double(*bf_d));
      if (bf_k)
        cfg.set("mv.eigen_fraction", format_double(*bf_k));
      if (bf_iters)
        cfg.set("imap.iterations", std::to_string(*bf_iters));
      const Container fc = read_container(bf_in);
      const ArrayGeometry geom = read_geometry(fc);
      const ImagingGrid grid = read_grid(fc);
      adopt(cfg, geom, grid);
      const BeamformedImage img = beamform_frame(read_frame(fc), geom, bf_kind, cfg, bf_model);
      write_container(bf_out, image_container(img, grid));
      write_resolved_beside(cfg, bf_out);
      out << bf_out << "\n";
    } else if (*tr) {
      const RunConfig cfg = load_config(train_args, seed);
      const fs::path dir = cfg.get("output.dir");
      const DatasetConfig d = dataset_from(cfg);
      const TrainConfig t = train_from(cfg);
      const Dataset data = make_dataset(d);
      const TrainResult res = train_able(data, t, cfg.get_double("train.dropout"));
      fs::create_directories(dir);
      const MLPParams stages[] = {res.params};
      write_container(dir / "model.bft", model_container(stages));
      write_csv(dir / "loss.csv", [&](std::ostream &os) { write_loss_csv(os, res.loss_history); });
      cfg.write_resolved(dir);
      out << "held-out smsle " << evaluate(res.params, data.test, t.loss).smsle << "\n";
    } else if (*ev) {
      const RunConfig cfg = load_config(eval_args, seed);
      const fs::path dir = cfg.get("output.dir");
      const Dataset data = make_dataset(dataset_from(cfg));
      std::optional<MLPParams> able;
      if (!eval_model.empty()) {
        auto stages = read_model(read_container(eval_model));
        if (stages.size() != 1)
          throw ConfigError("eval takes a single-stage ABLE model");
        able = std::move(stages.front());
      }
      const Comparison cmp = compare_beamformers(data, compare_from(cfg), able ? &*able : nullptr);
      fs::create_directories(dir);
      write_csv(dir / "metrics.csv", [&](std::ostream &os) { write_metrics_csv(os, cmp.rows); });
      write_images(dir / "images", data, cmp.outputs, cfg.get_double("metrics.dynamic_range_db"));
      cfg.write_resolved(dir);
      out << (dir / "metrics.csv").string() << "\n";
    } else if (*fl) {
      SweepOptions opts;
      opts.imap_iterations = fl_iters;
      opts.eigen_fraction = fl_k;
      opts.accounting = parse_accounting(fl_acc);
      if (!fl_sweep.empty()) {
        const FlopMethod all[] = {FlopMethod::imap, FlopMethod::mv, FlopMethod::ebmv,
                                  FlopMethod::able, FlopMethod::lower_bound};
        const auto rows = sweep(all, fl_sweep, opts);
        std::ostringstream os;
        write_sweep_csv(os, rows);
        if (fl_csv.empty())
          out << os.str();
        else
          write_text(fl_csv, os.str());
      } else {
        const FlopMethod m = parse_method(fl_method);
        const FlopReport r = flop_report(m, fl_n.front(), opts);
        out << r.flops << "\n";
        if (m == FlopMethod::able) {
          const auto widths = able_widths(fl_n.front());
          const auto a = flops_able(widths, AbleAccounting::literal);
          const auto b = flops_able(widths, AbleAccounting::first_layer_activation);
          out << "# accounting a (literal layer sum) = " << a
              << ", accounting b (first-layer activation on the full width) = " << b
              << ", difference " << (b - a) << "\n";
        }
        if (!fl_csv.empty()) {
          const FlopReport rows[] = {r};
          write_csv(fl_csv, [&](std::ostream &os) { write_sweep_csv(os, rows); });
        }
      }
    } else if (*rd) {
      const BeamformedImage img = read_image(read_container(rd_in));
      const GreyImage g = render(envelope(img), rd_dr, rd_out);
      if (g.blank)
        err << "warning: envelope is zero everywhere; wrote a black image\n";
      RunConfig cfg;
      cfg.set("metrics.dynamic_range_db", format_double(rd_dr));
      write_resolved_beside(cfg, rd_out);
      out << rd_out << "\n";
    } else if (*pl) {
      const RunConfig cfg = load_config(pipe_args, seed);
      pipeline(cfg, cfg.get("output.dir"), out);
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace beamforge::cli
