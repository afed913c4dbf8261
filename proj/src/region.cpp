#include "pwlsi/region.hpp"

#include <algorithm>

#include "pwlsi/errors.hpp"

namespace pwlsi {

AnomalyRegion::AnomalyRegion(std::vector<int> indices, int n) : indices_(std::move(indices)), n_(n) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (!indices_.empty() && (indices_.front() < 0 || indices_.back() >= n_))
    throw DomainError("region index out of range");
}

bool AnomalyRegion::contains(int i) const {
  return std::binary_search(indices_.begin(), indices_.end(), i);
}

std::string AnomalyRegion::to_string() const {
  std::string out = "[";
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(indices_[k]);
  }
  return out + "]";
}

}  // namespace pwlsi
