#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "smart/constraint.hpp"
#include "smart/feature_mask.hpp"
#include "smart/nn.hpp"
#include "smart/rng.hpp"

namespace smart {

// Feature d is pruned iff the l2 norm of row d of the first-layer weights is
// strictly below epsilon.
FeatureMask derive_mask(const Eigen::Ref<const Matrix>& first_layer, double epsilon);

// One schematic-memory entry: the live features of a sample under the mask
// that was in force when it was stored.
struct SparseSample {
    std::vector<std::uint32_t> indices;  // sorted
    std::vector<double> values;
    int label = 0;
    std::uint32_t mask_id = 0;
    std::size_t cost = 0;  // number of stored feature values
    int task = -1;         // diagnostic only; never used for selection
};

SparseSample encode(std::span<const double> x, int label, const FeatureMask& mask,
                    std::uint32_t mask_id = 0);

Vector decode(const SparseSample& sample, std::size_t dim);

enum class BudgetMode {
    units,        // one unit per stored feature value
    index_value,  // two units per stored feature (index + value)
    count,        // one unit per sample, budget = nominal capacity
};

BudgetMode parse_budget_mode(std::string_view name);

class ReplayBuffer {
public:
    struct Entry {
        SparseSample sample;
        double score = 0.0;  // GSS score in [0, 2]
        std::uint64_t uid = 0;
    };

    ReplayBuffer(std::size_t dim, std::size_t budget_units, BudgetMode mode = BudgetMode::units);

    // Budget sized for `nominal` dense samples of dimension `dim`.
    static ReplayBuffer for_nominal(std::size_t dim, std::size_t nominal,
                                    BudgetMode mode = BudgetMode::units);

    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] std::size_t budget_units() const { return budget_units_; }
    [[nodiscard]] std::size_t used_units() const { return used_units_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    [[nodiscard]] BudgetMode mode() const { return mode_; }
    [[nodiscard]] std::span<const Entry> entries() const { return entries_; }

    [[nodiscard]] std::size_t charge(const SparseSample& sample) const;
    [[nodiscard]] bool fits(const SparseSample& sample) const {
        return used_units_ + charge(sample) <= budget_units_;
    }

    // Returns the id of an identical registered mask when one exists.
    std::uint32_t register_mask(const FeatureMask& mask);
    [[nodiscard]] const FeatureMask& mask(std::uint32_t id) const;
    [[nodiscard]] const std::map<std::uint32_t, FeatureMask>& masks() const { return masks_; }

    // Throws std::length_error if the sample does not fit.
    std::uint64_t insert(SparseSample sample, double score);
    // Removes the entries at the given positions (any order).
    void erase(std::vector<std::size_t> positions);

    [[nodiscard]] Vector decode(std::size_t position) const;

    // SMARTBUF v1 text snapshot. Scores are not part of the format; loaded
    // entries get a neutral score of 1.
    void save(std::ostream& out) const;
    static ReplayBuffer load(std::istream& in, BudgetMode mode = BudgetMode::units);

private:
    std::size_t dim_;
    std::size_t budget_units_;
    BudgetMode mode_;
    std::size_t used_units_ = 0;
    std::vector<Entry> entries_;
    std::map<std::uint32_t, FeatureMask> masks_;
    std::uint32_t next_mask_id_ = 0;
    std::uint64_t next_uid_ = 0;
};

struct BufferStats {
    std::size_t effective_samples = 0;
    std::size_t used_units = 0;
    std::size_t budget_units = 0;
    std::map<int, std::size_t> per_task_counts;
    double occupancy = 0.0;
};

BufferStats stats(const ReplayBuffer& buffer);

// ---- GSS-Greedy selection --------------------------------------------------

struct GssConfig {
    std::size_t comparisons = 10;
};

// Cosine similarity, defined as 0 when either vector is zero.
double cosine_similarity(const Vector& a, const Vector& b);

// Up to k distinct buffer positions drawn uniformly.
std::vector<std::size_t> draw_comparisons(const ReplayBuffer& buffer, std::size_t k, Rng& rng);

// 1 + max cosine, or 0 when there is nothing to compare against.
double gss_score(std::span<const double> cosines);

struct Admission {
    bool accepted = false;
    std::vector<std::uint64_t> evicted;  // uids
    std::string diagnostic;
};

// Inserts a scored candidate, evicting score-proportional victims when the
// budget is exceeded. Victims are only removed if the candidate scores below
// every one of them; otherwise the buffer is left untouched.
Admission gss_greedy_admit(ReplayBuffer& buffer, SparseSample candidate, double score, Rng& rng);

using GradientFn = std::function<GradVec(const SparseSample&)>;

bool gss_greedy_offer(ReplayBuffer& buffer, SparseSample candidate, const GradientFn& grad_of,
                      Rng& rng, const GssConfig& config = {}, Admission* outcome = nullptr);

// n uniform draws without replacement; when n exceeds the entry count every
// entry is returned once per full pass before any repeats.
std::vector<std::size_t> sample_replay(const ReplayBuffer& buffer, std::size_t n, Rng& rng);

Batch decode_batch(const ReplayBuffer& buffer, std::span<const std::size_t> positions);

}  // namespace smart
