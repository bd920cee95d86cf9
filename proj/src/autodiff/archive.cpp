#include "cagsr/autodiff/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cagsr/common/error.hpp"

namespace cagsr::ad {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'A', 'G', 'S', 'R', 'A', 'R', 'C'};

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  if (s == "i32") return DType::kI32;
  throw InputError("archive: unknown dtype '" + s + "'");
}

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw InputError("archive: truncated header");
  U value;
  std::memcpy(&value, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return value;
}

template <typename U>
std::vector<U> decode(const ArrayEntry& e, DType expected) {
  if (e.dtype != expected) {
    throw InputError("archive: array '" + e.name + "' has dtype " +
                     std::string(dtype_name(e.dtype)) + ", expected " +
                     std::string(dtype_name(expected)));
  }
  std::vector<U> out(e.bytes.size() / sizeof(U));
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

}  // namespace

std::string_view dtype_name(DType d) {
  switch (d) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
  }
  return "?";
}

std::size_t dtype_size(DType d) {
  return d == DType::kF64 ? 8 : 4;
}

void Archive::add_raw(std::string name, DType dtype, Shape shape,
                      const void* data, std::size_t count) {
  if (contains(name)) throw ContractError("archive: duplicate array '" + name + "'");
  if (numel(shape) != count) {
    throw DimensionError("archive: array '" + name + "' shape " + shape_str(shape) +
                         " does not hold " + std::to_string(count) + " values");
  }
  ArrayEntry e{std::move(name), dtype, std::move(shape), {}};
  e.bytes.resize(count * dtype_size(dtype));
  if (count) std::memcpy(e.bytes.data(), data, e.bytes.size());
  entries_.push_back(std::move(e));
}

void Archive::add(std::string name, Shape shape, std::span<const float> values) {
  add_raw(std::move(name), DType::kF32, std::move(shape), values.data(), values.size());
}
void Archive::add(std::string name, Shape shape, std::span<const double> values) {
  add_raw(std::move(name), DType::kF64, std::move(shape), values.data(), values.size());
}
void Archive::add(std::string name, Shape shape, std::span<const std::int32_t> values) {
  add_raw(std::move(name), DType::kI32, std::move(shape), values.data(), values.size());
}

bool Archive::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const ArrayEntry& Archive::entry(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw InputError("archive: no array named '" + std::string(name) + "'");
}

std::vector<float> Archive::get_f32(std::string_view name) const {
  return decode<float>(entry(name), DType::kF32);
}
std::vector<double> Archive::get_f64(std::string_view name) const {
  return decode<double>(entry(name), DType::kF64);
}
std::vector<std::int32_t> Archive::get_i32(std::string_view name) const {
  return decode<std::int32_t>(entry(name), DType::kI32);
}

template <typename T>
std::vector<T> Archive::get_real(std::string_view name) const {
  const auto& e = entry(name);
  if (e.dtype == DType::kF32) {
    auto v = decode<float>(e, DType::kF32);
    return std::vector<T>(v.begin(), v.end());
  }
  auto v = decode<double>(e, DType::kF64);
  return std::vector<T>(v.begin(), v.end());
}
template std::vector<float> Archive::get_real<float>(std::string_view) const;
template std::vector<double> Archive::get_real<double>(std::string_view) const;

std::string Archive::serialize() const {
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["metadata"] = metadata;
  manifest["arrays"] = nlohmann::ordered_json::array();
  for (const auto& e : entries_) {
    manifest["arrays"].push_back(
        {{"name", e.name}, {"dtype", dtype_name(e.dtype)}, {"shape", e.shape}});
  }
  const std::string header = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& e : entries_)
    out.append(reinterpret_cast<const char*>(e.bytes.data()), e.bytes.size());
  return out;
}

Archive Archive::parse(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw InputError("archive: bad magic");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion) {
    throw InputError("archive: unsupported format version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw InputError("archive: truncated manifest");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("archive: manifest is not valid JSON: ") + e.what());
  }
  pos += header_len;
  Archive ar;
  ar.metadata = manifest.value("metadata", nlohmann::ordered_json::object());
  for (const auto& a : manifest.at("arrays")) {
    ArrayEntry e;
    e.name = a.at("name").get<std::string>();
    e.dtype = parse_dtype(a.at("dtype").get<std::string>());
    e.shape = a.at("shape").get<Shape>();
    const std::size_t n = numel(e.shape) * dtype_size(e.dtype);
    if (pos + n > bytes.size()) {
      throw InputError("archive: payload for '" + e.name + "' is truncated");
    }
    e.bytes.assign(bytes.begin() + pos, bytes.begin() + pos + n);
    pos += n;
    ar.entries_.push_back(std::move(e));
  }
  if (pos != bytes.size()) throw InputError("archive: trailing bytes after payload");
  return ar;
}

void Archive::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

Archive Archive::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cagsr::ad
