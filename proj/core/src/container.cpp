#include "beamforge/container.hpp"

#include "beamforge/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace beamforge {

namespace {

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

template <typename T> void put_le(std::vector<std::uint8_t> &out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <typename T> std::vector<std::uint8_t> pack(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty())
      std::memcpy(out.data(), values.data(), out.size());
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint8_t raw[sizeof(T)];
      std::memcpy(raw, &values[i], sizeof(T));
      std::reverse_copy(raw, raw + sizeof(T), out.data() + i * sizeof(T));
    }
  }
  return out;
}

template <typename T> std::vector<T> unpack(const std::vector<std::uint8_t> &bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + i * sizeof(T), sizeof(T));
    if constexpr (std::endian::native != std::endian::little)
      std::reverse(raw, raw + sizeof(T));
    std::memcpy(&out[i], raw, sizeof(T));
  }
  return out;
}

std::uint64_t checked_count(const std::vector<std::uint64_t> &dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d)
      throw InvalidInput("tensor element count overflows");
    n *= d;
  }
  return n;
}

Tensor make(std::string name, DType dtype, std::vector<std::uint64_t> dims,
            std::vector<std::uint8_t> bytes, std::size_t count) {
  if (checked_count(dims) != count)
    throw InvalidInput("tensor '" + name + "' dims do not match value count");
  if (name.size() > std::numeric_limits<std::uint16_t>::max())
    throw InvalidInput("tensor name too long");
  if (dims.size() > std::numeric_limits<std::uint8_t>::max())
    throw InvalidInput("tensor has too many dimensions");
  return Tensor{std::move(name), dtype, std::move(dims), std::move(bytes)};
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  template <typename T> T le(const char *what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::span<const std::uint8_t> take(std::size_t n, const char *what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char *what) const {
    if (remaining() < n)
      throw ParseError(std::string("truncated container while reading ") + what,
                       pos_);
  }

private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

} // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
  case DType::f32:
    return 4;
  case DType::f64:
    return 8;
  case DType::u8:
    return 1;
  }
  throw InvalidInput("unknown dtype");
}

std::uint64_t Tensor::element_count() const { return checked_count(dims); }

Tensor Tensor::f64(std::string name, std::vector<std::uint64_t> dims,
                   std::span<const double> values) {
  return make(std::move(name), DType::f64, std::move(dims), pack(values),
              values.size());
}

Tensor Tensor::f32(std::string name, std::vector<std::uint64_t> dims,
                   std::span<const float> values) {
  return make(std::move(name), DType::f32, std::move(dims), pack(values),
              values.size());
}

Tensor Tensor::u8(std::string name, std::vector<std::uint64_t> dims,
                  std::span<const std::uint8_t> values) {
  return make(std::move(name), DType::u8, std::move(dims),
              {values.begin(), values.end()}, values.size());
}

std::vector<double> Tensor::to_f64() const {
  if (dtype == DType::f64)
    return unpack<double>(bytes);
  if (dtype == DType::f32) {
    const auto f = unpack<float>(bytes);
    return {f.begin(), f.end()};
  }
  throw ParseError("tensor '" + name + "' is not floating point", 0);
}

std::vector<float> Tensor::to_f32() const {
  if (dtype != DType::f32)
    throw ParseError("tensor '" + name + "' is not f32", 0);
  return unpack<float>(bytes);
}

std::string Tensor::to_string() const {
  if (dtype != DType::u8)
    throw ParseError("tensor '" + name + "' is not u8", 0);
  return {bytes.begin(), bytes.end()};
}

bool operator==(const Tensor &a, const Tensor &b) {
  return a.name == b.name && a.dtype == b.dtype && a.dims == b.dims &&
         a.bytes == b.bytes;
}

void Container::add(Tensor t) {
  if (find(t.name))
    throw InvalidInput("duplicate tensor name '" + t.name + "'");
  if (tensors_.size() == std::numeric_limits<std::uint16_t>::max())
    throw InvalidInput("container holds at most 65535 tensors");
  tensors_.push_back(std::move(t));
}

const Tensor *Container::find(std::string_view name) const {
  auto it = std::find_if(tensors_.begin(), tensors_.end(),
                         [&](const Tensor &t) { return t.name == name; });
  return it == tensors_.end() ? nullptr : &*it;
}

const Tensor &Container::get(std::string_view name) const {
  if (const Tensor *t = find(name))
    return *t;
  throw ParseError("container has no tensor '" + std::string(name) + "'", 0);
}

std::vector<std::uint8_t> encode_container(const Container &c) {
  std::vector<std::uint8_t> out{'B', 'F', 'T', '1'};
  put_le<std::uint16_t>(out, Container::kVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.size()));
  for (const auto &t : c.tensors()) {
    if (t.bytes.size() != t.element_count() * dtype_size(t.dtype))
      throw InvalidInput("tensor '" + t.name + "' payload size mismatch");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.dtype));
    out.push_back(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims)
      put_le<std::uint64_t>(out, d);
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), "BFT1"))
    throw ParseError("bad magic, expected BFT1", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.le<std::uint16_t>("version");
  if (version != Container::kVersion)
    throw ParseError("unsupported container version " + std::to_string(version),
                     version_at);
  const auto count = r.le<std::uint16_t>("tensor count");

  Container c;
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    const auto len = r.le<std::uint16_t>("name length");
    const auto name_bytes = r.take(len, "name");
    Tensor t;
    t.name.assign(name_bytes.begin(), name_bytes.end());
    const std::size_t dtype_at = r.offset();
    const auto code = r.le<std::uint8_t>("dtype");
    if (code < 1 || code > 3)
      throw ParseError("unknown dtype code " + std::to_string(code), dtype_at);
    t.dtype = static_cast<DType>(code);
    const auto ndims = r.le<std::uint8_t>("ndims");
    const std::size_t dims_at = r.offset();
    t.dims.resize(ndims);
    for (auto &d : t.dims)
      d = r.le<std::uint64_t>("dims");
    std::uint64_t count_elems = 0;
    try {
      count_elems = t.element_count();
    } catch (const InvalidInput &) {
      throw ParseError("tensor dims overflow", dims_at);
    }
    const std::uint64_t size = dtype_size(t.dtype);
    if (count_elems > r.remaining() / size)
      throw ParseError("truncated payload for tensor '" + t.name + "'", r.offset());
    const auto data = r.take(static_cast<std::size_t>(count_elems * size), "payload");
    t.bytes.assign(data.begin(), data.end());
    if (c.find(t.name))
      throw ParseError("duplicate tensor name '" + t.name + "'", start);
    c.add(std::move(t));
  }
  if (r.remaining() != 0)
    throw ParseError("trailing bytes after last tensor", r.offset());
  return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InvalidInput("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path &path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw InvalidInput("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw InvalidInput("write failed for '" + path.string() + "'");
}

void write_text(const std::filesystem::path &path, const std::string &text) {
  write_file(path, {reinterpret_cast<const std::uint8_t *>(text.data()), text.size()});
}

void write_container(const std::filesystem::path &path, const Container &c) {
  write_file(path, encode_container(c));
}

Container read_container(const std::filesystem::path &path) {
  return decode_container(read_file(path));
}

} // namespace beamforge
