#include "beamforge/config.hpp"

#include "beamforge/container.hpp"
#include "beamforge/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace beamforge {

namespace {

std::string_view trim(std::string_view s) {
  const auto space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!s.empty() && space(s.front()))
    s.remove_prefix(1);
  while (!s.empty() && space(s.back()))
    s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.')
    return false;
  char prev = 0;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '.';
    if (!ok || (c == '.' && prev == '.'))
      return false;
    prev = c;
  }
  return true;
}

[[noreturn]] void bad_value(std::string_view what, std::string_view text,
                            std::string_view expected) {
  throw ConfigError(std::string(what) + ": expected " + std::string(expected) +
                    ", got '" + std::string(text) + "'");
}

} // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view source) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty())
      continue;

    const auto where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!valid_key(key))
      throw ConfigError(where + "malformed key '" + key + "'");
    if (const auto it = kv.lines_.find(key); it != kv.lines_.end())
      throw ConfigError(where + "duplicate key '" + key + "' (first on line " +
                        std::to_string(it->second) + ")");
    kv.values_[key] = value;
    kv.lines_[key] = line_no;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path &path) {
  const auto bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char *>(bytes.data()),
                                bytes.size()),
               path.string());
}

void KeyValues::set(const std::string &key, std::string value) {
  if (!valid_key(key))
    throw ConfigError("malformed key '" + key + "'");
  if (value.find_first_of("#\n") != std::string::npos)
    throw ConfigError(key + ": value may not contain '#' or a newline");
  values_[key] = std::string(trim(value));
}

const std::string *KeyValues::find(std::string_view key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::size_t KeyValues::line_of(std::string_view key) const {
  const auto it = lines_.find(key);
  return it == lines_.end() ? 0 : it->second;
}

std::string KeyValues::str() const {
  std::string out;
  for (const auto &[k, v] : values_)
    out += k + " = " + v + "\n";
  return out;
}

double parse_double(std::string_view text, std::string_view what) {
  const auto t = trim(text);
  if (t == "inf" || t == "+inf")
    return std::numeric_limits<double>::infinity();
  if (t == "-inf")
    return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() ||
      std::isnan(v))
    bad_value(what, text, "a number");
  return v;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  const auto t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    bad_value(what, text, "a non-negative integer");
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes")
    return true;
  if (t == "false" || t == "0" || t == "no")
    return false;
  bad_value(what, text, "true or false");
}

std::vector<std::string> parse_words(std::string_view text) {
  std::vector<std::string> out;
  while (true) {
    const std::size_t comma = text.find(',');
    const auto w = trim(text.substr(0, comma));
    if (!w.empty())
      out.emplace_back(w);
    if (comma == std::string_view::npos)
      break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (const auto &w : parse_words(text))
    out.push_back(parse_double(w, what));
  return out;
}

std::string format_double(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{})
    throw Error("cannot format number");
  return std::string(buf, ptr);
}

const std::map<std::string, std::string, std::less<>> &config_defaults() {
  static const std::map<std::string, std::string, std::less<>> table = {
      {"seed", "1"},
      {"experiment.kind", "compare"},
      {"output.dir", "out"},

      {"geometry.preset", "linear_desk"},
      {"geometry.kind", ""},
      {"geometry.elements", ""},
      {"geometry.pitch_m", ""},
      {"geometry.f0_hz", ""},
      {"geometry.fs_hz", ""},
      {"geometry.c_mps", ""},
      {"geometry.transmit_scheme", ""},
      {"geometry.angle_rad", ""},
      {"geometry.transmits", ""},
      {"geometry.receive_aperture", ""},
      {"geometry.grid_kind", ""},
      {"geometry.grid_x", ""},
      {"geometry.grid_z", ""},
      {"geometry.extent_m", ""},

      {"phantom.speckle_density", ""},
      {"phantom.cyst_radius_m", ""},
      {"phantom.point_amplitude", ""},
      {"phantom.point_background_density", ""},
      {"phantom.max_points", "3"},
      {"phantom.snr_db", "30"},
      {"phantom.bandwidth", "0.6"},

      {"beamformer.kind", "ebmv"},
      {"beamformer.window", "boxcar"},
      {"imap.iterations", "2"},
      {"mv.subaperture", "0"},
      {"mv.diagonal_loading", "0.01"},
      {"mv.eigen_fraction", "0.5"},

      {"dataset.train_frames", "64"},
      {"dataset.test_frames", "16"},

      {"train.target", "ebmv"},
      {"train.epochs", "50"},
      {"train.lambda", "0.9"},
      {"train.learning_rate", "0.001"},
      {"train.dropout", "0.2"},
      {"train.log_floor", "1e-08"},
      {"train.pixel_gradient_clip", format_double(kTrainingGradientClip)},

      {"metrics.dynamic_range_db", "60"},

      {"subsample.rates", "0.5,0.25"},
      {"subsample.schemes", "random,deterministic"},
  };
  return table;
}

RunConfig::RunConfig() {
  for (const auto &[k, v] : config_defaults())
    values_.set(k, v);
}

RunConfig RunConfig::from_file(const std::filesystem::path &path) {
  RunConfig cfg;
  cfg.merge(KeyValues::load(path));
  return cfg;
}

RunConfig RunConfig::from_text(std::string_view text, std::string_view source) {
  RunConfig cfg;
  cfg.merge(KeyValues::parse(text, source));
  return cfg;
}

void RunConfig::merge(const KeyValues &kv) {
  for (const auto &[k, v] : kv.entries()) {
    if (!config_defaults().contains(k)) {
      const std::size_t line = kv.line_of(k);
      throw ConfigError((line ? "line " + std::to_string(line) + ": " : "") +
                        "unknown key '" + k + "'");
    }
    values_.set(k, v);
  }
}

void RunConfig::set(const std::string &key, std::string value) {
  if (!config_defaults().contains(key))
    throw ConfigError("unknown key '" + key + "'");
  values_.set(key, std::move(value));
}

const std::string &RunConfig::get(std::string_view key) const {
  const auto *v = values_.find(key);
  if (!v)
    throw ConfigError("unknown key '" + std::string(key) + "'");
  return *v;
}

double RunConfig::get_double(std::string_view key) const {
  return parse_double(get(key), key);
}

std::uint64_t RunConfig::get_u64(std::string_view key) const {
  return parse_u64(get(key), key);
}

std::size_t RunConfig::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::vector<double> RunConfig::get_doubles(std::string_view key) const {
  return parse_doubles(get(key), key);
}

ExperimentKind RunConfig::experiment() const {
  const auto &k = get("experiment.kind");
  if (k == "compare")
    return ExperimentKind::compare;
  if (k == "subsample")
    return ExperimentKind::subsample;
  bad_value("experiment.kind", k, "compare or subsample");
}

void RunConfig::resolve() {
  auto fill = [&](const char *key, const std::string &value) {
    if (get(key).empty())
      values_.set(key, value);
  };
  const ArrayGeometry preset = preset_geometry(parse_preset(get("geometry.preset")));

  fill("geometry.kind", preset.kind == ArrayKind::linear ? "linear" : "circular");
  fill("geometry.elements", std::to_string(preset.element_count()));
  fill("geometry.pitch_m", format_double(preset.pitch));
  fill("geometry.f0_hz", format_double(preset.f0));
  fill("geometry.fs_hz", format_double(preset.fs));
  fill("geometry.c_mps", format_double(preset.c));
  if (const auto *sa = std::get_if<SyntheticAperture>(&preset.transmit)) {
    fill("geometry.transmit_scheme", "synthetic_aperture");
    fill("geometry.transmits", std::to_string(sa->num_transmits));
    fill("geometry.receive_aperture", std::to_string(sa->receive_aperture));
    fill("geometry.angle_rad", "0");
  } else {
    fill("geometry.transmit_scheme", "plane_wave");
    fill("geometry.angle_rad",
         format_double(std::get<PlaneWave>(preset.transmit).angle));
    fill("geometry.transmits", "1");
    fill("geometry.receive_aperture", get("geometry.elements"));
  }

  const bool linear = get("geometry.kind") == "linear";
  if (!linear && get("geometry.kind") != "circular")
    bad_value("geometry.kind", get("geometry.kind"), "linear or circular");
  if (linear) {
    fill("geometry.grid_kind", "cartesian");
    fill("geometry.grid_x", "64");
    fill("geometry.grid_z", "96");
    fill("geometry.extent_m", "-0.0016,0.0016,0.013,0.01588");
    fill("phantom.speckle_density", "50");
    fill("phantom.cyst_radius_m", "0.0008");
    fill("phantom.point_amplitude", "20");
    fill("phantom.point_background_density", "0");
  } else {
    fill("geometry.grid_kind", "polar");
    fill("geometry.grid_x", "48");
    fill("geometry.grid_z", "80");
    fill("geometry.extent_m", "-0.6,0.6,0.001,0.002");
    fill("phantom.speckle_density", "200");
    fill("phantom.cyst_radius_m", "0.00025");
    fill("phantom.point_amplitude", "10");
    fill("phantom.point_background_density", "200");
  }
  experiment();
}

std::string RunConfig::resolved_text() const {
  return "# resolved run configuration\n" + values_.str();
}

void RunConfig::write_resolved(const std::filesystem::path &dir) const {
  write_text(dir / "resolved.cfg", resolved_text());
}

ArrayGeometry geometry_from(const RunConfig &cfg) {
  RunConfig r = cfg;
  r.resolve();
  const std::size_t n = r.get_size("geometry.elements");
  const double pitch = r.get_double("geometry.pitch_m");
  const double f0 = r.get_double("geometry.f0_hz");
  const double fs = r.get_double("geometry.fs_hz");
  const double c = r.get_double("geometry.c_mps");

  TransmitScheme tx;
  const auto &scheme = r.get("geometry.transmit_scheme");
  if (scheme == "plane_wave")
    tx = PlaneWave{r.get_double("geometry.angle_rad")};
  else if (scheme == "synthetic_aperture")
    tx = SyntheticAperture{r.get_size("geometry.transmits"),
                           r.get_size("geometry.receive_aperture")};
  else
    bad_value("geometry.transmit_scheme", scheme,
              "plane_wave or synthetic_aperture");

  ArrayGeometry g = r.get("geometry.kind") == "linear"
                        ? make_linear_array(n, pitch, f0, fs, c, tx)
                        : make_circular_array(n, pitch, f0, fs, c, tx);
  g.validate();
  return g;
}

ImagingGrid grid_from(const RunConfig &cfg) {
  RunConfig r = cfg;
  r.resolve();
  const auto e = r.get_doubles("geometry.extent_m");
  if (e.size() != 4)
    bad_value("geometry.extent_m", r.get("geometry.extent_m"),
              "four values lateral0,lateral1,axial0,axial1");
  const std::size_t nx = r.get_size("geometry.grid_x");
  const std::size_t nz = r.get_size("geometry.grid_z");
  const auto &kind = r.get("geometry.grid_kind");
  if (kind == "cartesian")
    return ImagingGrid::cartesian(e[0], e[1], nx, e[2], e[3], nz);
  if (kind == "polar")
    return ImagingGrid::polar(e[0], e[1], nx, e[2], e[3], nz);
  bad_value("geometry.grid_kind", kind, "cartesian or polar");
}

MVConfig mv_from(const RunConfig &cfg) {
  MVConfig mv;
  mv.subaperture = cfg.get_size("mv.subaperture");
  mv.diagonal_loading = cfg.get_double("mv.diagonal_loading");
  mv.eigen_fraction = cfg.get_double("mv.eigen_fraction");
  return mv;
}

CompareConfig compare_from(const RunConfig &cfg) {
  CompareConfig c;
  c.mv = mv_from(cfg);
  c.imap_iterations = static_cast<int>(cfg.get_u64("imap.iterations"));
  return c;
}

TrainConfig train_from(const RunConfig &cfg) {
  TrainConfig t;
  t.epochs = cfg.get_size("train.epochs");
  t.seed = cfg.seed();
  t.loss.lambda = cfg.get_double("train.lambda");
  t.loss.log_floor = cfg.get_double("train.log_floor");
  t.loss.pixel_gradient_clip = cfg.get_double("train.pixel_gradient_clip");
  t.loss.validate();
  t.adam.learning_rate = cfg.get_double("train.learning_rate");
  if (!(t.adam.learning_rate > 0.0))
    throw ConfigError("train.learning_rate must be positive");
  return t;
}

DatasetConfig dataset_from(const RunConfig &cfg) {
  RunConfig r = cfg;
  r.resolve();
  DatasetConfig d;
  d.geometry = geometry_from(r);
  d.grid = grid_from(r);
  d.train_frames = r.get_size("dataset.train_frames");
  d.test_frames = r.get_size("dataset.test_frames");
  d.snr_db = r.get_double("phantom.snr_db");
  d.speckle_density = r.get_double("phantom.speckle_density");
  d.cyst_radius = r.get_double("phantom.cyst_radius_m");
  d.point_amplitude = r.get_double("phantom.point_amplitude");
  d.max_points = r.get_size("phantom.max_points");
  d.point_background_density = r.get_double("phantom.point_background_density");
  d.bandwidth = r.get_double("phantom.bandwidth");
  d.target = parse_target(r.get("train.target"));
  d.mv = mv_from(r);
  d.seed = r.seed();
  d.validate();
  return d;
}

std::vector<SubsampleCondition> conditions_from(const RunConfig &cfg) {
  const auto rates = cfg.get_doubles("subsample.rates");
  std::vector<SubsampleKind> kinds;
  for (const auto &w : parse_words(cfg.get("subsample.schemes")))
    kinds.push_back(parse_subsample_kind(w));
  if (rates.empty() || kinds.empty())
    throw ConfigError("subsample.rates and subsample.schemes must be non-empty");

  std::vector<SubsampleCondition> out;
  for (const auto &c : standard_conditions(rates, cfg.seed())) {
    if (!c.scheme ||
        std::find(kinds.begin(), kinds.end(), c.scheme->kind) != kinds.end())
      out.push_back(c);
  }
  return out;
}

} // namespace beamforge
