#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cagsr/autodiff/tensor.hpp"

namespace cagsr::ad {

// On-disk layout (all integers little-endian):
//
//   bytes 0..7   magic "CAGSRARC"
//   u32          format version
//   u64          manifest length N
//   N bytes      manifest, UTF-8 JSON:
//                  {"format_version", "metadata": {...},
//                   "arrays": [{"name", "dtype", "shape"}, ...]}
//   payload      each array's elements, flat row-major, in manifest order
//
// dtype is one of "f32", "f64", "i32".
enum class DType { kF32, kF64, kI32 };

std::string_view dtype_name(DType d);
std::size_t dtype_size(DType d);

struct ArrayEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload
};

class Archive {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  void add(std::string name, Shape shape, std::span<const float> values);
  void add(std::string name, Shape shape, std::span<const double> values);
  void add(std::string name, Shape shape, std::span<const std::int32_t> values);

  bool contains(std::string_view name) const;
  const ArrayEntry& entry(std::string_view name) const;
  const std::vector<ArrayEntry>& entries() const { return entries_; }

  std::vector<float> get_f32(std::string_view name) const;
  std::vector<double> get_f64(std::string_view name) const;
  std::vector<std::int32_t> get_i32(std::string_view name) const;
  // Reads a float array of either precision, converting to T.
  template <typename T>
  std::vector<T> get_real(std::string_view name) const;

  std::string serialize() const;
  static Archive parse(std::string_view bytes);

  // Writes to a sibling temp file, then renames over `path`.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  void add_raw(std::string name, DType dtype, Shape shape, const void* data,
               std::size_t count);

  std::vector<ArrayEntry> entries_;
};

// Atomically replaces `path` with `contents` (write temp + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace cagsr::ad
