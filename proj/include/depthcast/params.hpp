#pragma once

#include <span>
#include <string>
#include <vector>

namespace depthcast {

/// Flat fp64 parameter storage with named, shaped segments.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Appends a zero-initialized segment; names must be unique.
  std::span<double> add(const std::string& name, std::vector<int> shape);

  std::span<double> segment(const std::string& name);
  std::span<const double> segment(const std::string& name) const;
  const Segment& info(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<Segment>& segments() const { return segments_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Same segments, all values zero.
  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& o) const;
  /// Name of the segment containing flat index i.
  const std::string& segment_of(std::size_t i) const;

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

}  // namespace depthcast
