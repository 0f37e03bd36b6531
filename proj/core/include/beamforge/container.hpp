#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace beamforge {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };

std::size_t dtype_size(DType t);

/// A named n-dimensional array. `bytes` holds the row-major little-endian
/// payload exactly as stored on disk.
struct Tensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;

  static Tensor f64(std::string name, std::vector<std::uint64_t> dims,
                    std::span<const double> values);
  static Tensor f32(std::string name, std::vector<std::uint64_t> dims,
                    std::span<const float> values);
  static Tensor u8(std::string name, std::vector<std::uint64_t> dims,
                   std::span<const std::uint8_t> values);

  /// f32 payloads are widened; u8 payloads are rejected.
  std::vector<double> to_f64() const;
  std::vector<float> to_f32() const;
  std::string to_string() const; ///< u8 payload as text
};

bool operator==(const Tensor &a, const Tensor &b);

/// Ordered set of uniquely named tensors. On-disk layout:
///   "BFT1" | u16 version | u16 count |
///   count x { u16 name_len | name | u8 dtype | u8 ndims | ndims x u64 | data }
/// all little-endian.
class Container {
public:
  static constexpr std::uint16_t kVersion = 1;

  void add(Tensor t); ///< throws InvalidInput on a duplicate name
  const Tensor *find(std::string_view name) const;
  const Tensor &get(std::string_view name) const; ///< throws ParseError
  const std::vector<Tensor> &tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  friend bool operator==(const Container &, const Container &) = default;

private:
  std::vector<Tensor> tensors_;
};

std::vector<std::uint8_t> encode_container(const Container &c);
/// Throws ParseError carrying the byte offset of the first bad field.
Container decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path &path, const Container &c);
Container read_container(const std::filesystem::path &path);

/// Whole-file helpers shared by every artifact writer.
std::vector<std::uint8_t> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path,
                std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path &path, const std::string &text);

} // namespace beamforge
