#include "smart/feature_mask.hpp"

#include <algorithm>
#include <stdexcept>

namespace smart {

bool FeatureMask::is_pruned(std::size_t feature) const {
    return std::binary_search(pruned.begin(), pruned.end(), feature);
}

std::vector<std::size_t> FeatureMask::live() const {
    std::vector<std::size_t> out;
    out.reserve(live_count());
    auto next = pruned.begin();
    for (std::size_t d = 0; d < dim; ++d) {
        if (next != pruned.end() && *next == d) {
            ++next;
            continue;
        }
        out.push_back(d);
    }
    return out;
}

void FeatureMask::validate() const {
    for (std::size_t i = 0; i < pruned.size(); ++i) {
        if (pruned[i] >= dim) throw std::invalid_argument("feature mask: index out of range");
        if (i > 0 && pruned[i] <= pruned[i - 1])
            throw std::invalid_argument("feature mask: indices must be strictly increasing");
    }
}

}  // namespace smart
