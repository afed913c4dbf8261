#pragma once

#include <string>
#include <vector>

namespace pwlsi {

/// Sorted set of pixel indices flagged as anomalous, within an n-pixel image.
class AnomalyRegion {
 public:
  AnomalyRegion() = default;
  /// Indices are sorted and de-duplicated; each must lie in [0, n).
  AnomalyRegion(std::vector<int> indices, int n);

  const std::vector<int>& indices() const { return indices_; }
  int n() const { return n_; }
  int size() const { return static_cast<int>(indices_.size()); }
  int complement_size() const { return n_ - size(); }
  bool empty() const { return indices_.empty(); }
  /// 0 < |A| < n
  bool testable() const { return size() > 0 && size() < n_; }
  bool contains(int i) const;

  std::string to_string() const;

  friend bool operator==(const AnomalyRegion&, const AnomalyRegion&) = default;

 private:
  std::vector<int> indices_;
  int n_ = 0;
};

}  // namespace pwlsi
