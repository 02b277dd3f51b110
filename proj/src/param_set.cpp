#include "omniisr/param_set.hpp"

#include <algorithm>
#include <cmath>

#include "omniisr/errors.hpp"

namespace omniisr {

void ParamSet::insert(const std::string& name, Tensor value, ParamTag tag) {
  auto [it, inserted] = entries_.try_emplace(name, Entry{std::move(value), tag});
  if (!inserted) throw ConfigError("duplicate parameter name '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ProtocolError("no parameter named '" + name + "'");
  return it->second.value;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ProtocolError("no parameter named '" + name + "'");
  return it->second.value;
}

const ParamTag& ParamSet::tag(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ProtocolError("no parameter named '" + name + "'");
  return it->second.tag;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, e] : entries_) out.insert(name, Tensor(e.value.shape()), e.tag);
  return out;
}

ParamSet ParamSet::model_part() const {
  ParamSet out;
  for (const auto& [name, e] : entries_) {
    if (e.tag.is_model()) out.insert(name, e.value, e.tag);
  }
  return out;
}

bool ParamSet::combinable_with(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto b = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    if (name != b->first || e.value.shape() != b->second.value.shape()) return false;
    ++b;
  }
  return true;
}

void ParamSet::require_combinable(const ParamSet& other, const char* op) const {
  if (combinable_with(other)) return;
  std::string detail;
  for (const auto& [name, e] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) {
      detail = "'" + name + "' missing on the right";
      break;
    }
    if (it->second.value.shape() != e.value.shape()) {
      detail = "'" + name + "' has shape " + to_string(e.value.shape()) + " vs " +
               to_string(it->second.value.shape());
      break;
    }
  }
  if (detail.empty()) detail = "right-hand side has extra entries";
  throw ProtocolError(std::string("cannot ") + op + " parameter sets: " + detail);
}

ParamSet& ParamSet::operator+=(const ParamSet& other) { return axpy(1.0, other); }

ParamSet& ParamSet::operator-=(const ParamSet& other) { return axpy(-1.0, other); }

ParamSet& ParamSet::operator*=(double factor) {
  for (auto& [name, e] : entries_) {
    for (double& v : e.value.values()) v *= factor;
  }
  return *this;
}

ParamSet& ParamSet::axpy(double factor, const ParamSet& other) {
  require_combinable(other, "combine");
  auto b = other.entries_.begin();
  for (auto& [name, e] : entries_) {
    auto dst = e.value.values();
    auto src = b->second.value.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
    ++b;
  }
  return *this;
}

double ParamSet::dot(const ParamSet& other) const {
  require_combinable(other, "dot");
  double acc = 0.0;
  auto b = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    auto x = e.value.values();
    auto y = b->second.value.values();
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    ++b;
  }
  return acc;
}

double ParamSet::squared_norm() const {
  double acc = 0.0;
  for (const auto& [name, e] : entries_) {
    for (double v : e.value.values()) acc += v * v;
  }
  return acc;
}

bool ParamSet::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& kv) { return kv.second.value.all_finite(); });
}

ParamSet operator+(ParamSet a, const ParamSet& b) { return a += b; }
ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
ParamSet operator*(double factor, ParamSet a) { return a *= factor; }

double max_abs_difference(const ParamSet& a, const ParamSet& b) {
  if (!a.combinable_with(b)) throw ProtocolError("max_abs_difference: sets differ");
  double worst = 0.0;
  auto ib = b.begin();
  for (const auto& [name, e] : a) {
    auto x = e.value.values();
    auto y = ib->second.value.values();
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    ++ib;
  }
  return worst;
}

}  // namespace omniisr
