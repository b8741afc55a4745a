#include "cladnet/params.hpp"

#include <cstring>
#include <fstream>

namespace cladnet {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

Tensor& ParameterStore::create(const std::string& name, Shape shape) {
  return create(name, Tensor(std::move(shape)));
}

Tensor& ParameterStore::create(const std::string& name, Tensor init) {
  if (contains(name)) throw NumericError("parameter '" + name + "' already exists");
  order_.push_back(name);
  return values_.emplace(name, std::move(init)).first->second;
}

bool ParameterStore::contains(const std::string& name) const { return values_.count(name) != 0; }

Tensor& ParameterStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw NumericError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw NumericError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  }
  return out;
}

ParameterStore ParameterStore::clone(const std::vector<std::string>& prefixes) const {
  ParameterStore out;
  for (const auto& n : order_) {
    bool take = prefixes.empty();
    for (const auto& p : prefixes) {
      if (n.rfind(p, 0) == 0) {
        take = true;
        break;
      }
    }
    if (take) out.create(n, values_.at(n));
  }
  return out;
}

void ParameterStore::assign_from(const ParameterStore& other) {
  for (const auto& n : other.names()) {
    if (contains(n)) {
      at(n) = other.at(n);
    } else {
      create(n, other.at(n));
    }
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_u64(os, order_.size());
  for (const auto& name : order_) {
    const Tensor& t = values_.at(name);
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) write_u64(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t count = read_u64(is);
  ParameterStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(is);
    Shape shape(ndim);
    for (auto& d : shape) d = read_u64(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    store.create(name, std::move(t));
  }
  return store;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& name : order_) {
    mix(name.data(), name.size());
    const Tensor& t = values_.at(name);
    for (std::size_t d : t.shape()) mix(&d, sizeof(d));
    mix(t.data().data(), t.numel() * sizeof(double));
  }
  return h;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace cladnet
