#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "omniisr/tensor.hpp"

namespace omniisr {

/// Whether a parameter belongs to the main network (theta) or to the
/// dimension adapter attached at tap `tap` (phi_m, 1-based).
struct ParamTag {
  enum class Kind { model, adapter };
  Kind kind = Kind::model;
  std::size_t tap = 0;

  static ParamTag model() { return {}; }
  static ParamTag adapter(std::size_t m) { return {Kind::adapter, m}; }
  bool is_model() const { return kind == Kind::model; }
  bool operator==(const ParamTag&) const = default;
};

/// Named collection of parameter tensors. Entries are ordered by name so
/// that every traversal (aggregation, norms, serialization) is deterministic.
///
/// Arithmetic between two sets requires identical names and shapes;
/// anything else raises ProtocolError.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    ParamTag tag;
    bool operator==(const Entry&) const = default;
  };
  using Map = std::map<std::string, Entry>;

  void insert(const std::string& name, Tensor value, ParamTag tag = {});

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const ParamTag& tag(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Total number of scalar values across entries.
  std::size_t scalar_count() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }

  /// Same names, tags and shapes; all values zero.
  ParamSet zeros_like() const;
  /// Only the entries tagged as main-network parameters.
  ParamSet model_part() const;

  bool combinable_with(const ParamSet& other) const;

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator-=(const ParamSet& other);
  ParamSet& operator*=(double factor);
  /// this += factor * other
  ParamSet& axpy(double factor, const ParamSet& other);

  double dot(const ParamSet& other) const;
  double squared_norm() const;
  bool all_finite() const;

  bool operator==(const ParamSet&) const = default;

 private:
  void require_combinable(const ParamSet& other, const char* op) const;

  Map entries_;
};

ParamSet operator+(ParamSet a, const ParamSet& b);
ParamSet operator-(ParamSet a, const ParamSet& b);
ParamSet operator*(double factor, ParamSet a);

/// Largest absolute elementwise difference between two combinable sets.
double max_abs_difference(const ParamSet& a, const ParamSet& b);

}  // namespace omniisr
