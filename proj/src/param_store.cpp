#include "hamflow/param_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "hamflow/errors.hpp"

namespace hamflow {

namespace {

constexpr char kMagic[8] = {'H', 'F', 'L', 'O', 'W', 'P', 'S', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& os, std::span<const double> xs) {
  for (double x : xs) {
    std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(x));
    os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::uint32_t u32() {
    std::uint32_t v = 0;
    read(&v, sizeof v);
    return to_little(v);
  }

  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw ConfigError("checkpoint: implausible name length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void doubles(std::span<double> out) {
    for (double& x : out) {
      std::uint64_t bits = 0;
      read(&bits, sizeof bits);
      x = std::bit_cast<double>(to_little(bits));
    }
  }

  void read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw ConfigError("checkpoint: truncated file");
  }

 private:
  std::istream& is_;
};

}  // namespace

std::size_t ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (frozen_) throw ContractError("ParamStore: cannot add '" + name + "' after freeze");
  if (rows <= 0 || cols <= 0) throw ContractError("ParamStore: empty block '" + name + "'");
  for (const auto& e : entries_)
    if (e.name == name) throw ContractError("ParamStore: duplicate block '" + name + "'");
  Entry e{name, rows, cols, values_.size()};
  values_.resize(values_.size() + e.size(), 0.0);
  for (auto& [_, s] : slots_) s.resize(values_.size(), 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw ConfigError("ParamStore: no block named '" + name + "'");
}

ParamStore::MatrixMap ParamStore::matrix(std::size_t i) {
  const Entry& e = entries_.at(i);
  return MatrixMap(values_.data() + e.offset, e.rows, e.cols);
}

ParamStore::ConstMatrixMap ParamStore::matrix(std::size_t i) const {
  const Entry& e = entries_.at(i);
  return ConstMatrixMap(values_.data() + e.offset, e.rows, e.cols);
}

std::vector<double>& ParamStore::slot(const std::string& name) {
  auto& s = slots_[name];
  s.resize(values_.size(), 0.0);
  return s;
}

void ParamStore::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kParamStoreVersion);
    put_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      put_string(os, e.name);
      put_u32(os, static_cast<std::uint32_t>(e.rows));
      put_u32(os, static_cast<std::uint32_t>(e.cols));
    }
    put_u32(os, static_cast<std::uint32_t>(slots_.size()));
    for (const auto& [name, _] : slots_) put_string(os, name);
    put_doubles(os, values_);
    for (const auto& [_, s] : slots_) put_doubles(os, s);
    if (!os) throw ConfigError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  Reader r(is);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ConfigError("checkpoint: bad magic");
  if (r.u32() != kParamStoreVersion) throw ConfigError("checkpoint: unsupported version");
  ParamStore store;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0 || std::uint64_t(rows) * cols > (1ull << 28))
      throw ConfigError("checkpoint: bad shape for '" + name + "'");
    store.add(name, rows, cols);
  }
  const std::uint32_t nslots = r.u32();
  std::vector<std::string> slot_names;
  for (std::uint32_t i = 0; i < nslots; ++i) slot_names.push_back(r.str());
  r.doubles(store.values_);
  for (const auto& name : slot_names) r.doubles(store.slot(name));
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes");
  store.freeze();
  return store;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.rows != y.rows || x.cols != y.cols) return false;
  }
  auto same_bits = [](std::span<const double> u, std::span<const double> v) {
    return u.size() == v.size() && std::memcmp(u.data(), v.data(), u.size() * sizeof(double)) == 0;
  };
  if (!same_bits(a.values_, b.values_)) return false;
  if (a.slots_.size() != b.slots_.size()) return false;
  for (const auto& [name, s] : a.slots_) {
    auto it = b.slots_.find(name);
    if (it == b.slots_.end() || !same_bits(s, it->second)) return false;
  }
  return true;
}

}  // namespace hamflow
