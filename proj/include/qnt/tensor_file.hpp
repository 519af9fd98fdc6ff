#pragma once

// QTNS tensor container.
//
//   "QTNS" | version u8 = 1 | count u32
//   per entry: name_len u16 | name bytes | dtype u8 (0 = float64) | rank u8 |
//              dims u64 x rank | payload float64 x prod(dims)
//
// All integers and floats are little-endian regardless of host.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qnt/error.hpp"

namespace qnt {

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  static Tensor vector(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.values = std::move(v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor{{}, {v}}; }

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using NamedTensor = std::pair<std::string, Tensor>;
using TensorList = std::vector<NamedTensor>;

inline constexpr char kTensorMagic[4] = {'Q', 'T', 'N', 'S'};
inline constexpr std::uint8_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeFloat64 = 0;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedFileError(std::string("tensor file truncated while reading ") + what);
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_tensors(const TensorList& tensors) {
  std::set<std::string_view> seen;
  for (const auto& [name, t] : tensors) {
    if (name.empty()) throw InvalidInput("tensor names must be nonempty");
    if (name.size() > 0xFFFF) throw InvalidInput("tensor name too long: " + name.substr(0, 32));
    if (!seen.insert(name).second) throw InvalidInput("duplicate tensor name '" + name + "'");
    if (t.shape.size() > 0xFF) throw InvalidInput("tensor '" + name + "' has rank > 255");
    if (t.element_count() != t.values.size()) {
      throw InvalidInput("tensor '" + name + "': shape does not match value count");
    }
  }
  if (tensors.size() > 0xFFFFFFFFu) throw InvalidInput("too many tensors");

  std::string out(kTensorMagic, 4);
  out.push_back(static_cast<char>(kTensorVersion));
  detail::put_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_le(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(kDtypeFloat64));
    out.push_back(static_cast<char>(t.shape.size()));
    for (auto d : t.shape) detail::put_le(out, d);
    for (double v : t.values) detail::put_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline TensorList decode_tensors(std::string_view bytes) {
  detail::Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kTensorMagic, 4)) {
    throw BadMagicError("not a QTNS tensor file (bad magic)");
  }
  const auto version = in.get_le<std::uint8_t>("version");
  if (version != kTensorVersion) {
    throw UnsupportedVersionError("unsupported QTNS version " + std::to_string(version));
  }
  const auto count = in.get_le<std::uint32_t>("entry count");
  TensorList out;
  std::set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = in.get_le<std::uint16_t>("name length");
    std::string name(in.take(name_len, "name"));
    const auto dtype = in.get_le<std::uint8_t>("dtype");
    if (dtype != kDtypeFloat64) {
      throw IoError("tensor '" + name + "': unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = in.get_le<std::uint8_t>("rank");
    Tensor t;
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(in.get_le<std::uint64_t>("dims"));
    const auto n = t.element_count();
    if (n > in.remaining() / 8) throw TruncatedFileError("tensor file truncated in payload of '" + name + "'");
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<double>(in.get_le<std::uint64_t>("payload"));
    if (!seen.insert(name).second) throw IoError("duplicate tensor name '" + name + "' in file");
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!in.at_end()) throw IoError("trailing bytes after last tensor entry");
  return out;
}

inline void write_tensors(const std::string& path, const TensorList& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline TensorList read_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

inline const Tensor* find_tensor(const TensorList& tensors, std::string_view name) {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

}  // namespace qnt
