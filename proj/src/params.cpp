#include "depthcast/params.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace depthcast {

std::span<double> ParamVector::add(const std::string& name, std::vector<int> shape) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter segment '" + name + "'");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw std::invalid_argument("segment '" + name + "' has a non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  Segment s{name, std::move(shape), values_.size(), n};
  values_.resize(values_.size() + n, 0.0);
  segments_.push_back(std::move(s));
  return segment(name);
}

const ParamVector::Segment& ParamVector::info(const std::string& name) const {
  auto it = std::find_if(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
  if (it == segments_.end()) throw std::out_of_range("no parameter segment named '" + name + "'");
  return *it;
}

bool ParamVector::contains(const std::string& name) const {
  return std::any_of(segments_.begin(), segments_.end(), [&](const Segment& s) { return s.name == name; });
}

std::span<double> ParamVector::segment(const std::string& name) {
  const Segment& s = info(name);
  return std::span<double>(values_).subspan(s.offset, s.size);
}

std::span<const double> ParamVector::segment(const std::string& name) const {
  const Segment& s = info(name);
  return std::span<const double>(values_).subspan(s.offset, s.size);
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  std::fill(z.values_.begin(), z.values_.end(), 0.0);
  return z;
}

bool ParamVector::same_layout(const ParamVector& o) const {
  if (segments_.size() != o.segments_.size() || values_.size() != o.values_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name != o.segments_[i].name || segments_[i].shape != o.segments_[i].shape) return false;
  }
  return true;
}

const std::string& ParamVector::segment_of(std::size_t i) const {
  for (const auto& s : segments_) {
    if (i >= s.offset && i < s.offset + s.size) return s.name;
  }
  throw std::out_of_range("flat index outside the parameter vector");
}

}  // namespace depthcast
