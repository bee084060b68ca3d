#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hamflow {

/// Named, shaped parameter blocks packed into one flat array of doubles,
/// plus optional per-parameter slots (optimizer moments) of the same length.
///
/// Blocks are registered during model construction; after `freeze()` the
/// layout is fixed and only values may change.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  };

  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

  /// Registers a zero-initialized rows x cols block; returns its entry index.
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::size_t entry_count() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  std::size_t find(const std::string& name) const;
  std::size_t size() const { return values_.size(); }

  MatrixMap matrix(std::size_t i);
  ConstMatrixMap matrix(std::size_t i) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Slot arrays are created on first access, zero-filled.
  std::vector<double>& slot(const std::string& name);
  bool has_slot(const std::string& name) const { return slots_.count(name) != 0; }
  const std::map<std::string, std::vector<double>>& slots() const { return slots_; }

  /// Checkpoint format (all integers little-endian):
  ///   magic "HFLOWPS1", u32 version, u32 entry count,
  ///   per entry: u32 name length, name bytes, u32 rows, u32 cols,
  ///   u32 slot count, per slot: u32 name length, name bytes,
  ///   then every value as IEEE-754 binary64 little-endian, first the
  ///   parameter array, then each slot array in name order.
  /// Writes go to a temporary file that is renamed into place.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
  std::map<std::string, std::vector<double>> slots_;
  bool frozen_ = false;
};

inline constexpr std::uint32_t kParamStoreVersion = 1;

}  // namespace hamflow
