#pragma once

#include "beamforge/beamform.hpp"
#include "beamforge/evalsuite.hpp"
#include "beamforge/geometry.hpp"
#include "beamforge/train.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace beamforge {

/// Flat key=value document.
///
///   line    := blank | comment | entry
///   comment := '#' any*
///   entry   := key ws* '=' ws* value ws* comment?
///   key     := name ('.' name)*        e.g. seed, geometry.elements
///
/// Keys are case-sensitive; a repeated key is an error naming both lines.
/// Values keep inner spaces; '#' always starts a comment.
class KeyValues {
public:
  static KeyValues parse(std::string_view text,
                         std::string_view source = "<config>");
  static KeyValues load(const std::filesystem::path &path);

  void set(const std::string &key, std::string value);
  const std::string *find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }
  std::size_t line_of(std::string_view key) const; ///< 0 = not from a file
  const std::map<std::string, std::string, std::less<>> &entries() const {
    return values_;
  }

  /// Sorted by key, one entry per line; parse(str()) == *this.
  std::string str() const;

private:
  std::map<std::string, std::string, std::less<>> values_;
  std::map<std::string, std::size_t, std::less<>> lines_;
};

double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::vector<double> parse_doubles(std::string_view text, std::string_view what);
std::vector<std::string> parse_words(std::string_view text);
std::string format_double(double v); ///< shortest round-trip form

/// Every key a run understands, with its default. An empty default is
/// filled from the geometry preset by RunConfig::resolve.
const std::map<std::string, std::string, std::less<>> &config_defaults();

enum class ExperimentKind { compare, subsample };

/// File values override defaults; CLI overrides win over both. Unknown keys
/// are rejected so typos cannot silently fall back to defaults.
class RunConfig {
public:
  RunConfig();
  static RunConfig from_file(const std::filesystem::path &path);
  static RunConfig from_text(std::string_view text,
                             std::string_view source = "<config>");

  void merge(const KeyValues &kv);
  void set(const std::string &key, std::string value);

  const std::string &get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  std::vector<double> get_doubles(std::string_view key) const;

  std::uint64_t seed() const { return get_u64("seed"); }
  ExperimentKind experiment() const;

  /// Fills blank keys from the preset named by geometry.preset.
  void resolve();
  const KeyValues &values() const { return values_; }
  std::string resolved_text() const;
  void write_resolved(const std::filesystem::path &dir) const; ///< dir/resolved.cfg

private:
  KeyValues values_;
};

ArrayGeometry geometry_from(const RunConfig &cfg);
ImagingGrid grid_from(const RunConfig &cfg);
MVConfig mv_from(const RunConfig &cfg);
CompareConfig compare_from(const RunConfig &cfg);
TrainConfig train_from(const RunConfig &cfg);
DatasetConfig dataset_from(const RunConfig &cfg);
std::vector<SubsampleCondition> conditions_from(const RunConfig &cfg);

} // namespace beamforge
