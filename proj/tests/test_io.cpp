#include "beamforge/container.hpp"
#include "beamforge/error.hpp"
#include "beamforge/render.hpp"
#include "beamforge/serialize.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

using namespace beamforge;
namespace fs = std::filesystem;

namespace {

void put_le(std::vector<std::uint8_t> &out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class Fn> std::uint64_t parse_offset(Fn &&fn) {
  try {
    fn();
  } catch (const ParseError &e) {
    return e.offset();
  }
  ADD_FAILURE() << "no ParseError";
  return ~std::uint64_t{0};
}

Container random_container(Rng &rng) {
  std::uniform_int_distribution<int> count(0, 5), kind(0, 2), ndims(0, 3), dim(0, 4),
      len(1, 12);
  std::normal_distribution<double> g(0.0, 1e3);
  Container c;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    std::string name = "t" + std::to_string(i) + "_" + std::string(len(rng), 'x');
    std::vector<std::uint64_t> dims(ndims(rng));
    std::uint64_t total = 1;
    for (auto &d : dims)
      total *= (d = dim(rng));
    const int k = kind(rng);
    if (k == 0) {
      std::vector<double> v(total);
      for (auto &x : v)
        x = g(rng);
      c.add(Tensor::f64(name, dims, v));
    } else if (k == 1) {
      std::vector<float> v(total);
      for (auto &x : v)
        x = static_cast<float>(g(rng));
      c.add(Tensor::f32(name, dims, v));
    } else {
      std::vector<std::uint8_t> v(total);
      for (auto &x : v)
        x = static_cast<std::uint8_t>(rng());
      c.add(Tensor::u8(name, dims, v));
    }
  }
  return c;
}

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / "beamforge_test_io";
  fs::create_directories(dir);
  return dir / name;
}

} // namespace

TEST(Container, EncodingMatchesTheByteLayout) {
  Container c;
  const double v[] = {1.5, -2.0};
  c.add(Tensor::f64("a", {2}, v));
  std::vector<std::uint8_t> expect{'B', 'F', 'T', '1'};
  put_le(expect, 1, 2); // version
  put_le(expect, 1, 2); // count
  put_le(expect, 1, 2); // name length
  expect.push_back('a');
  expect.push_back(2); // f64
  expect.push_back(1); // ndims
  put_le(expect, 2, 8);
  for (double x : v)
    put_le(expect, std::bit_cast<std::uint64_t>(x), 8);
  EXPECT_EQ(encode_container(c), expect);
  EXPECT_EQ(decode_container(expect), c);
}

TEST(Container, RandomRoundTrips) {
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto c = random_container(rng);
    const auto bytes = encode_container(c);
    EXPECT_EQ(decode_container(bytes), c);
    EXPECT_EQ(encode_container(decode_container(bytes)), bytes);
  }
}

TEST(Container, MalformedInputReportsTheOffset) {
  Container c;
  const double v[] = {1.0, 2.0};
  c.add(Tensor::f64("a", {2}, v));
  const auto good = encode_container(c);

  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(parse_offset([&] { decode_container(bad); }), 0u);

  bad = good;
  bad[4] = 9; // version
  EXPECT_EQ(parse_offset([&] { decode_container(bad); }), 4u);

  bad = good;
  bad[11] = 7; // dtype code
  EXPECT_EQ(parse_offset([&] { decode_container(bad); }), 11u);

  bad = good;
  bad.push_back(0);
  EXPECT_EQ(parse_offset([&] { decode_container(bad); }), good.size());

  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    const std::span<const std::uint8_t> prefix(good.data(), cut);
    EXPECT_LE(parse_offset([&] { decode_container(prefix); }), cut);
  }

  Container dup;
  dup.add(Tensor::f64("a", {2}, v));
  EXPECT_THROW(dup.add(Tensor::f64("a", {2}, v)), InvalidInput);
  EXPECT_THROW(dup.get("missing"), ParseError);
  EXPECT_THROW(Tensor::f64("b", {3}, v), InvalidInput);
  const std::uint8_t bytes[] = {1};
  EXPECT_THROW(Tensor::u8("c", {1}, bytes).to_f64(), ParseError);
}

TEST(Container, FilesRoundTrip) {
  Rng rng(3);
  const auto c = random_container(rng);
  const auto path = scratch("round.bft");
  write_container(path, c);
  EXPECT_EQ(read_container(path), c);
  EXPECT_THROW(read_container(scratch("does_not_exist.bft")), InvalidInput);
}

TEST(Render, DecibelMapping) {
  EXPECT_EQ(db_to_byte(0.0, 60.0), 255);
  EXPECT_EQ(db_to_byte(-30.0, 60.0), 128);
  EXPECT_EQ(db_to_byte(-60.0, 60.0), 0);
  EXPECT_EQ(db_to_byte(-90.0, 60.0), 0);
  EXPECT_EQ(db_to_byte(-INFINITY, 60.0), 0);
  EXPECT_EQ(db_to_byte(-20.0, 40.0), 128);
  EXPECT_THROW(db_to_byte(0.0, 0.0), InvalidInput);
}

TEST(Render, LogCompressIsDepthMajorAndScaleFree) {
  EnvelopeImage env{2, 3, Eigen::VectorXd(6)};
  // Column-major in (x, z): x=0 holds 1, 0.1, 0.01; x=1 holds 0.001, 0, 1.
  env.values << 1.0, 0.1, 0.01, 0.001, 0.0, 1.0;
  const auto img = log_compress(env, 60.0);
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 3u);
  const std::vector<std::uint8_t> expect{255, 0, 170, 0, 85, 255};
  EXPECT_EQ(img.pixels, expect);
  EXPECT_FALSE(img.blank);

  EnvelopeImage scaled = env;
  scaled.values *= 1e-7;
  EXPECT_EQ(log_compress(scaled, 60.0).pixels, img.pixels);

  EnvelopeImage zero{2, 2, Eigen::VectorXd::Zero(4)};
  const auto blank = log_compress(zero, 60.0);
  EXPECT_TRUE(blank.blank);
  EXPECT_EQ(blank.pixels, std::vector<std::uint8_t>(4, 0));
}

TEST(Render, PgmRoundTripAndErrors) {
  GreyImage img{3, 2, {0, 10, 20, 30, 40, 255}, false};
  const auto bytes = encode_pgm(img);
  const std::string header(bytes.begin(), bytes.begin() + 11);
  EXPECT_EQ(header, "P5\n3 2\n255\n");
  const auto back = decode_pgm(bytes);
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.pixels, img.pixels);

  const std::string commented = "P5\n# note\n3 2\n255\n";
  std::vector<std::uint8_t> c(commented.begin(), commented.end());
  c.insert(c.end(), img.pixels.begin(), img.pixels.end());
  EXPECT_EQ(decode_pgm(c).pixels, img.pixels);

  auto bad = bytes;
  bad[1] = '2';
  EXPECT_EQ(parse_offset([&] { decode_pgm(bad); }), 0u);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_pgm(bad), ParseError);

  const auto path = scratch("r.pgm");
  EnvelopeImage env{2, 2, Eigen::Vector4d(1, 0.5, 0.25, 0.125)};
  const auto written = render(env, 40.0, path);
  EXPECT_EQ(decode_pgm(read_file(path)).pixels, written.pixels);
}

TEST(Serialize, GeometryTextRoundTrip) {
  for (auto p : {Preset::linear_desk, Preset::circular_desk, Preset::circular_full}) {
    auto g = preset_geometry(p);
    if (g.plane_wave())
      g.transmit = PlaneWave{0.125};
    const auto back = geometry_from_text(geometry_text(g));
    EXPECT_EQ(geometry_text(back), geometry_text(g));
    ASSERT_EQ(back.element_count(), g.element_count());
    for (std::size_t i = 0; i < g.element_count(); ++i) {
      EXPECT_EQ(back.elements[i].x, g.elements[i].x);
      EXPECT_EQ(back.elements[i].z, g.elements[i].z);
    }
    EXPECT_EQ(back.fs, g.fs);
    EXPECT_EQ(back.num_transmits(), g.num_transmits());
    EXPECT_EQ(back.aperture_size(), g.aperture_size());
  }
  EXPECT_THROW(geometry_from_text("kind = phased\n"), Error);
}

TEST(Serialize, RawFrameAndImageRoundTrip) {
  const auto g = preset_geometry(Preset::circular_desk);
  const auto grid = ImagingGrid::polar(-0.5, 0.5, 5, 1e-3, 2e-3, 7);
  RawChannelData raw(g.num_transmits(), g.receive_channels(), 30, 2.5e-7);
  for (std::size_t i = 0; i < raw.samples.size(); ++i)
    raw.samples[i] = std::sin(0.1 * static_cast<double>(i));
  const auto rc = decode_container(encode_container(raw_container(raw, g, grid)));
  const auto raw2 = read_raw(rc);
  EXPECT_EQ(raw2.samples, raw.samples);
  EXPECT_EQ(raw2.t0, raw.t0);
  EXPECT_EQ(raw2.num_channels, raw.num_channels);
  EXPECT_EQ(geometry_text(read_geometry(rc)), geometry_text(g));
  const auto grid2 = read_grid(rc);
  EXPECT_EQ(grid2.lateral, grid.lateral);
  EXPECT_EQ(grid2.axial, grid.axial);
  EXPECT_EQ(grid2.kind, grid.kind);

  auto frame = focus(raw, g, grid);
  frame.mask.assign(frame.aperture(), 1);
  frame.mask[3] = 0;
  const auto frame2 = read_frame(decode_container(encode_container(frame_container(frame, g, grid))));
  EXPECT_EQ(frame2.data, frame.data);
  EXPECT_EQ(frame2.mask, frame.mask);
  EXPECT_EQ(frame2.num_x, frame.num_x);

  const auto img = das(frame, Window::hanning);
  const auto img2 = read_image(decode_container(encode_container(image_container(img, grid))));
  EXPECT_EQ(img2.values, img.values);
  EXPECT_EQ(img2.beamformer, img.beamformer);
  EXPECT_EQ(img2.num_z, img.num_z);
}

TEST(Serialize, ModelRoundTrip) {
  Rng rng(4);
  const auto stage1 = MLPParams::glorot(able_widths(8), 0.2, rng);
  const auto stage2 = MLPParams::glorot(able_widths(8), 0.1, rng);
  const MLPParams stages[] = {stage1, stage2};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 0, 1};
  const auto c = decode_container(encode_container(model_container(stages, mask)));
  const auto back = read_model(c);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(back[s].dropout, stages[s].dropout);
    ASSERT_EQ(back[s].layers.size(), stages[s].layers.size());
    for (std::size_t l = 0; l < back[s].layers.size(); ++l) {
      EXPECT_EQ(back[s].layers[l].weight, stages[s].layers[l].weight);
      EXPECT_EQ(back[s].layers[l].bias, stages[s].layers[l].bias);
    }
  }
  EXPECT_EQ(read_model_mask(c), mask);
  const auto single = model_container(std::span<const MLPParams>(stages, 1));
  EXPECT_TRUE(read_model_mask(single).empty());
  EXPECT_EQ(read_model(single).size(), 1u);
  EXPECT_THROW(read_model(Container{}), ParseError);
}

TEST(Serialize, PhantomTextRoundTrip) {
  const Rect extent{-1e-3, 1e-3, 5e-3, 7e-3};
  const Disk cyst[] = {{{0.1e-3, 6e-3}, 0.4e-3}};
  const auto p = make_speckle_phantom(extent, 20.0, cyst, 5);
  const auto back = phantom_from_text(phantom_text(p));
  ASSERT_EQ(back.scatterers.size(), p.scatterers.size());
  for (std::size_t i = 0; i < p.scatterers.size(); ++i) {
    EXPECT_EQ(back.scatterers[i].position.x, p.scatterers[i].position.x);
    EXPECT_EQ(back.scatterers[i].position.z, p.scatterers[i].position.z);
    EXPECT_EQ(back.scatterers[i].amplitude, p.scatterers[i].amplitude);
  }
  ASSERT_EQ(back.regions.size(), p.regions.size());
  for (std::size_t i = 0; i < p.regions.size(); ++i) {
    EXPECT_EQ(back.regions[i].label, p.regions[i].label);
    EXPECT_EQ(back.regions[i].shape.index(), p.regions[i].shape.index());
  }
  EXPECT_EQ(phantom_text(back), phantom_text(p));
}
