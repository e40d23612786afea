#pragma once

#include <cstddef>
#include <vector>

namespace smart {

// Input features whose first-layer weight group has collapsed below the
// pruning threshold. Pruned features are dropped from stored samples and
// from the constrained parameter set.
struct FeatureMask {
    std::size_t dim = 0;
    std::vector<std::size_t> pruned;  // sorted, unique, each < dim
    double epsilon = 0.0;

    static FeatureMask none(std::size_t dim) { return FeatureMask{dim, {}, 0.0}; }

    [[nodiscard]] bool is_pruned(std::size_t feature) const;
    [[nodiscard]] std::size_t pruned_count() const { return pruned.size(); }
    [[nodiscard]] std::size_t live_count() const { return dim - pruned.size(); }
    [[nodiscard]] std::vector<std::size_t> live() const;
    // Throws std::invalid_argument when the index set is unsorted or out of range.
    void validate() const;

    friend bool operator==(const FeatureMask& a, const FeatureMask& b) {
        return a.dim == b.dim && a.pruned == b.pruned;
    }
};

}  // namespace smart
