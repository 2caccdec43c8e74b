#include "moedr/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace moedr {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'T'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, sizeof(T));
}

void put_f64_le(std::ostream& out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  in.read(reinterpret_cast<char*>(b), sizeof(T));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void TensorContainer::add(std::string name, Shape shape, std::vector<double> data) {
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("container entry '" + name + "': dims do not match payload");
  }
  if (contains(name)) {
    throw std::invalid_argument("container entry '" + name + "' already present");
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(data)});
}

bool TensorContainer::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const ContainerEntry& TensorContainer::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("container has no entry '" + name + "'");
}

void TensorContainer::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  put_bytes(out, kMagic, 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    put_bytes(out, e.name.data(), e.name.size());
    put_le<std::uint8_t>(out, kDtypeF64);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : e.data) put_f64_le(out, v);
  }
  if (!out) throw std::runtime_error("short write to " + path);
}

TensorContainer TensorContainer::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": bad magic, not a MOET container");
  }
  const auto version = get_le<std::uint16_t>(in);
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported container version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in);
  TensorContainer c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = get_le<std::uint8_t>(in);
    if (dtype != kDtypeF64) {
      throw std::runtime_error(path + ": entry '" + name + "' has unsupported dtype " +
                               std::to_string(dtype));
    }
    const auto rank = get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
    std::vector<double> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    if (!in) throw std::runtime_error(path + ": truncated container");
    c.entries_.push_back({std::move(name), std::move(shape), std::move(data)});
  }
  return c;
}

void load_parameters(std::vector<Parameter>& params, const TensorContainer& c,
                     const std::string& prefix) {
  for (auto& p : params) {
    const std::string key = prefix + p.name();
    if (!c.contains(key)) {
      throw std::runtime_error("weights file is missing tensor '" + key + "'");
    }
    const auto& e = c.at(key);
    if (e.shape != p.shape()) {
      throw std::runtime_error("tensor '" + key + "': expected shape " + shape_str(p.shape()) +
                               ", found " + shape_str(e.shape));
    }
    p.data() = e.data;
  }
}

void save_parameters(const std::vector<Parameter>& params, TensorContainer& c,
                     const std::string& prefix) {
  for (const auto& p : params) {
    c.add(prefix + p.name(), p.shape(), p.data());
  }
}

}  // namespace moedr
