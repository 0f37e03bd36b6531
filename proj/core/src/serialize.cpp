#include "beamforge/serialize.hpp"

#include "beamforge/error.hpp"

#include <algorithm>
#include <sstream>

namespace beamforge {

namespace {

using Dims = std::vector<std::uint64_t>;

Tensor text_tensor(std::string name, const std::string &text) {
  return Tensor::u8(std::move(name), {text.size()},
                    {reinterpret_cast<const std::uint8_t *>(text.data()),
                     text.size()});
}

KeyValues text_of(const Container &c, std::string_view name) {
  return KeyValues::parse(c.get(name).to_string(), name);
}

const std::string &need(const KeyValues &kv, std::string_view key) {
  const auto *v = kv.find(key);
  if (!v)
    throw ConfigError("missing key '" + std::string(key) + "'");
  return *v;
}

void expect_dims(const Tensor &t, const Dims &dims) {
  if (t.dims != dims)
    throw InvalidInput("tensor '" + t.name + "' has unexpected shape");
}

std::vector<double> numbers(std::string_view text, std::string_view what) {
  std::vector<double> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w)
    out.push_back(parse_double(w, what));
  return out;
}

std::string join(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty())
      s += ' ';
    s += format_double(v);
  }
  return s;
}

} // namespace

std::string geometry_text(const ArrayGeometry &geom) {
  KeyValues kv;
  kv.set("geometry.kind", geom.kind == ArrayKind::linear ? "linear" : "circular");
  kv.set("geometry.elements", std::to_string(geom.element_count()));
  kv.set("geometry.pitch_m", format_double(geom.pitch));
  kv.set("geometry.f0_hz", format_double(geom.f0));
  kv.set("geometry.fs_hz", format_double(geom.fs));
  kv.set("geometry.c_mps", format_double(geom.c));
  if (const auto *sa = std::get_if<SyntheticAperture>(&geom.transmit)) {
    kv.set("geometry.transmit_scheme", "synthetic_aperture");
    kv.set("geometry.transmits", std::to_string(sa->num_transmits));
    kv.set("geometry.receive_aperture", std::to_string(sa->receive_aperture));
    kv.set("geometry.angle_rad", "0");
  } else {
    kv.set("geometry.transmit_scheme", "plane_wave");
    kv.set("geometry.angle_rad",
           format_double(std::get<PlaneWave>(geom.transmit).angle));
    kv.set("geometry.transmits", "1");
    kv.set("geometry.receive_aperture", std::to_string(geom.element_count()));
  }
  return kv.str();
}

ArrayGeometry geometry_from_text(std::string_view text) {
  const auto kv = KeyValues::parse(text, "geometry");
  RunConfig cfg;
  cfg.set("geometry.preset", need(kv, "geometry.kind") == "linear"
                                 ? "linear_desk"
                                 : "circular_desk");
  for (const auto &[k, v] : kv.entries())
    cfg.set(k, v);
  return geometry_from(cfg);
}

void add_geometry(Container &c, const ArrayGeometry &geom) {
  c.add(text_tensor("geometry", geometry_text(geom)));
}

ArrayGeometry read_geometry(const Container &c) {
  return geometry_from_text(c.get("geometry").to_string());
}

void add_grid(Container &c, const ImagingGrid &grid) {
  KeyValues kv;
  kv.set("grid.kind", grid.kind == GridKind::cartesian ? "cartesian" : "polar");
  c.add(text_tensor("grid.meta", kv.str()));
  c.add(Tensor::f64("grid.lateral", {grid.num_x()}, grid.lateral));
  c.add(Tensor::f64("grid.axial", {grid.num_z()}, grid.axial));
}

ImagingGrid read_grid(const Container &c) {
  const auto kv = text_of(c, "grid.meta");
  const auto &kind = need(kv, "grid.kind");
  ImagingGrid g;
  if (kind == "cartesian")
    g.kind = GridKind::cartesian;
  else if (kind == "polar")
    g.kind = GridKind::polar;
  else
    throw ConfigError("unknown grid kind '" + kind + "'");
  g.lateral = c.get("grid.lateral").to_f64();
  g.axial = c.get("grid.axial").to_f64();
  if (g.lateral.empty() || g.axial.empty())
    throw InvalidInput("empty imaging grid");
  return g;
}

Container raw_container(const RawChannelData &raw, const ArrayGeometry &geom,
                        const ImagingGrid &grid) {
  Container c;
  c.add(Tensor::f64("raw.samples",
                    {raw.num_transmits, raw.num_channels, raw.num_samples},
                    raw.samples));
  const double t0 = raw.t0;
  c.add(Tensor::f64("raw.t0", {1}, {&t0, 1}));
  add_geometry(c, geom);
  add_grid(c, grid);
  return c;
}

RawChannelData read_raw(const Container &c) {
  const Tensor &s = c.get("raw.samples");
  if (s.dims.size() != 3)
    throw InvalidInput("raw.samples must be three-dimensional");
  const Tensor &t0 = c.get("raw.t0");
  expect_dims(t0, {1});
  RawChannelData raw(s.dims[0], s.dims[1], s.dims[2], t0.to_f64()[0]);
  raw.samples = s.to_f64();
  return raw;
}

Container frame_container(const FocusedFrame &frame, const ArrayGeometry &geom,
                          const ImagingGrid &grid) {
  if (frame.num_x != grid.num_x() || frame.num_z != grid.num_z())
    throw InvalidInput("frame does not match the grid");
  Container c;
  // Column p of the aperture x pixel matrix is contiguous, so the column-major
  // buffer is row-major [num_x, num_z, aperture].
  c.add(Tensor::f64("frame.data", {frame.num_x, frame.num_z, frame.aperture()},
                    {frame.data.data(), static_cast<std::size_t>(frame.data.size())}));
  if (!frame.mask.empty())
    c.add(Tensor::u8("frame.mask", {frame.mask.size()}, frame.mask));
  add_geometry(c, geom);
  add_grid(c, grid);
  return c;
}

FocusedFrame read_frame(const Container &c) {
  const Tensor &d = c.get("frame.data");
  if (d.dims.size() != 3)
    throw InvalidInput("frame.data must be three-dimensional");
  FocusedFrame f;
  f.num_x = d.dims[0];
  f.num_z = d.dims[1];
  const auto values = d.to_f64();
  f.data = Eigen::Map<const Eigen::MatrixXd>(
      values.data(), static_cast<Eigen::Index>(d.dims[2]),
      static_cast<Eigen::Index>(f.num_x * f.num_z));
  if (const Tensor *m = c.find("frame.mask")) {
    expect_dims(*m, {d.dims[2]});
    f.mask = m->bytes;
  }
  return f;
}

Container image_container(const BeamformedImage &image, const ImagingGrid &grid) {
  if (image.num_x != grid.num_x() || image.num_z != grid.num_z())
    throw InvalidInput("image does not match the grid");
  Container c;
  c.add(Tensor::f64("image.values", {image.num_x, image.num_z},
                    {image.values.data(), static_cast<std::size_t>(image.values.size())}));
  KeyValues kv;
  kv.set("image.beamformer", image.beamformer);
  c.add(text_tensor("image.meta", kv.str()));
  add_grid(c, grid);
  return c;
}

BeamformedImage read_image(const Container &c) {
  const Tensor &v = c.get("image.values");
  if (v.dims.size() != 2)
    throw InvalidInput("image.values must be two-dimensional");
  BeamformedImage img;
  img.num_x = v.dims[0];
  img.num_z = v.dims[1];
  const auto values = v.to_f64();
  img.values = Eigen::Map<const Eigen::VectorXd>(
      values.data(), static_cast<Eigen::Index>(values.size()));
  img.beamformer = need(text_of(c, "image.meta"), "image.beamformer");
  return img;
}

Container model_container(std::span<const MLPParams> stages,
                          std::span<const std::uint8_t> mask) {
  if (stages.empty())
    throw InvalidInput("model needs at least one stage");
  KeyValues kv;
  kv.set("model.format", std::to_string(kModelFormat));
  kv.set("model.stages", std::to_string(stages.size()));
  kv.set("model.activation", "antirectifier");
  kv.set("model.input", "unit_columns");
  Container c;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const MLPParams &p = stages[s];
    p.validate();
    const std::string stage = "stage" + std::to_string(s);
    std::string widths;
    for (std::size_t w : p.widths())
      widths += (widths.empty() ? "" : ",") + std::to_string(w);
    kv.set(stage + ".widths", widths);
    kv.set(stage + ".dropout", format_double(p.dropout));
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const DenseLayer &l = p.layers[i];
      const std::string layer = stage + ".layer" + std::to_string(i);
      // fan_out x fan_in column-major is row-major [fan_in, fan_out].
      c.add(Tensor::f64(layer + ".weight", {l.fan_in(), l.fan_out()},
                        {l.weight.data(), static_cast<std::size_t>(l.weight.size())}));
      c.add(Tensor::f64(layer + ".bias", {l.fan_out()},
                        {l.bias.data(), static_cast<std::size_t>(l.bias.size())}));
    }
  }
  if (!mask.empty())
    c.add(Tensor::u8("model.mask", {mask.size()}, mask));
  c.add(text_tensor("manifest", kv.str()));
  return c;
}

std::vector<MLPParams> read_model(const Container &c) {
  const auto kv = text_of(c, "manifest");
  if (parse_u64(need(kv, "model.format"), "model.format") != kModelFormat)
    throw ConfigError("unsupported model format " + need(kv, "model.format"));
  if (need(kv, "model.activation") != "antirectifier" ||
      need(kv, "model.input") != "unit_columns")
    throw ConfigError("model uses an unsupported network layout");
  const auto stages = parse_u64(need(kv, "model.stages"), "model.stages");
  std::vector<MLPParams> out;
  for (std::size_t s = 0; s < stages; ++s) {
    const std::string stage = "stage" + std::to_string(s);
    std::vector<std::size_t> widths;
    for (const auto &w : parse_words(need(kv, stage + ".widths")))
      widths.push_back(static_cast<std::size_t>(parse_u64(w, stage + ".widths")));
    MLPParams p = MLPParams::zeros(
        widths, parse_double(need(kv, stage + ".dropout"), stage + ".dropout"));
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      DenseLayer &l = p.layers[i];
      const std::string layer = stage + ".layer" + std::to_string(i);
      const Tensor &w = c.get(layer + ".weight");
      const Tensor &b = c.get(layer + ".bias");
      expect_dims(w, {l.fan_in(), l.fan_out()});
      expect_dims(b, {l.fan_out()});
      const auto wv = w.to_f64();
      const auto bv = b.to_f64();
      l.weight = Eigen::Map<const Eigen::MatrixXd>(wv.data(), l.weight.rows(),
                                                   l.weight.cols());
      l.bias = Eigen::Map<const Eigen::VectorXd>(bv.data(), l.bias.size());
    }
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::uint8_t> read_model_mask(const Container &c) {
  const Tensor *m = c.find("model.mask");
  return m ? m->bytes : std::vector<std::uint8_t>{};
}

std::string phantom_text(const Phantom &p) {
  KeyValues kv;
  kv.set("phantom.scatterers", std::to_string(p.scatterers.size()));
  kv.set("phantom.regions", std::to_string(p.regions.size()));
  for (std::size_t i = 0; i < p.scatterers.size(); ++i) {
    const auto &s = p.scatterers[i];
    kv.set("scatterer." + std::to_string(i),
           join({s.position.x, s.position.z, s.amplitude}));
  }
  for (std::size_t i = 0; i < p.regions.size(); ++i) {
    const auto &r = p.regions[i];
    if (r.label.empty() || r.label.find_first_of(" \t") != std::string::npos)
      throw InvalidInput("region labels must be single words");
    std::string v = r.label + " ";
    if (const auto *rect = std::get_if<Rect>(&r.shape))
      v += "rect " + join({rect->x0, rect->x1, rect->z0, rect->z1});
    else if (const auto *d = std::get_if<Disk>(&r.shape))
      v += "disk " + join({d->center.x, d->center.z, d->radius});
    else {
      const auto &a = std::get<Annulus>(r.shape);
      v += "annulus " + join({a.center.x, a.center.z, a.inner, a.outer});
    }
    kv.set("region." + std::to_string(i), v);
  }
  return kv.str();
}

Phantom phantom_from_text(std::string_view text) {
  const auto kv = KeyValues::parse(text, "phantom");
  const auto ns = parse_u64(need(kv, "phantom.scatterers"), "phantom.scatterers");
  const auto nr = parse_u64(need(kv, "phantom.regions"), "phantom.regions");
  if (kv.entries().size() != 2 + ns + nr)
    throw ConfigError("phantom has entries beyond its declared counts");

  Phantom p;
  p.scatterers.reserve(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    const std::string key = "scatterer." + std::to_string(i);
    const auto v = numbers(need(kv, key), key);
    if (v.size() != 3)
      throw ConfigError(key + ": expected x z amplitude");
    p.scatterers.push_back({{v[0], v[1]}, v[2]});
  }
  for (std::size_t i = 0; i < nr; ++i) {
    const std::string key = "region." + std::to_string(i);
    std::istringstream in(need(kv, key));
    std::string label, shape, rest;
    in >> label >> shape;
    std::getline(in, rest);
    const auto v = numbers(rest, key);
    Region r{label, Rect{}};
    if (shape == "rect" && v.size() == 4)
      r.shape = Rect{v[0], v[1], v[2], v[3]};
    else if (shape == "disk" && v.size() == 3)
      r.shape = Disk{{v[0], v[1]}, v[2]};
    else if (shape == "annulus" && v.size() == 4)
      r.shape = Annulus{{v[0], v[1]}, v[2], v[3]};
    else
      throw ConfigError(key + ": malformed region");
    p.regions.push_back(std::move(r));
  }
  return p;
}

} // namespace beamforge
