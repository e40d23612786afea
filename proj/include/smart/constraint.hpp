#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "smart/feature_mask.hpp"
#include "smart/nn.hpp"

namespace smart {

// Flat parameter indices that stay live once the first-layer weight rows of
// pruned input features are removed. Size is J - |r| * c.
class RestrictedIndexSet {
public:
    RestrictedIndexSet(const Layout& layout, const FeatureMask& mask);

    [[nodiscard]] std::size_t size() const { return indices_.size(); }
    [[nodiscard]] std::size_t total() const { return total_; }
    [[nodiscard]] std::size_t first_layer_width() const { return first_width_; }
    [[nodiscard]] std::size_t pruned_count() const { return pruned_.size(); }
    [[nodiscard]] std::span<const std::size_t> indices() const { return indices_; }

    friend bool operator==(const RestrictedIndexSet& a, const RestrictedIndexSet& b) {
        return a.total_ == b.total_ && a.first_width_ == b.first_width_ && a.pruned_ == b.pruned_;
    }

private:
    std::size_t total_ = 0;
    std::size_t first_width_ = 0;
    std::vector<std::size_t> pruned_;
    std::vector<std::size_t> indices_;
};

using IndexSetPtr = std::shared_ptr<const RestrictedIndexSet>;

IndexSetPtr make_index_set(const Layout& layout, const FeatureMask& mask);

// Gradient over a restricted parameter set.
class GradVec {
public:
    GradVec() = default;
    GradVec(IndexSetPtr index_set, Vector values);

    [[nodiscard]] const IndexSetPtr& index_set() const { return index_set_; }
    [[nodiscard]] const Vector& values() const { return values_; }
    Vector& values() { return values_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

private:
    IndexSetPtr index_set_;
    Vector values_;
};

GradVec restrict(const ParamSet& grads, const IndexSetPtr& index_set);
GradVec restrict(const ParamSet& grads, const FeatureMask& mask);

// Writes the live entries of `g` into `target`; pruned entries are untouched.
void scatter(const GradVec& g, ParamSet& target);

// g_star . g_ref; negative means the step would raise the replay loss to
// first order. Throws std::invalid_argument on index-set mismatch.
double violation(const GradVec& g_star, const GradVec& g_ref);

struct Projection {
    GradVec grad;
    bool zero_reference = false;
};

// g - (g.ref / |ref|^2) ref. Callers apply it only when violation < 0.
Projection project(const GradVec& g_star, const GradVec& g_ref);

// Mean cross-entropy gradient of the masked replay batch at the reference
// parameters, restricted to the live set of `mask`.
GradVec reference_gradient(const Batch& replay, const MlpParams& params_prev, const FeatureMask& mask);
GradVec reference_gradient(const Batch& replay, const MlpParams& params_prev, const FeatureMask& mask,
                           const IndexSetPtr& index_set);

// Magnitude threshold below which a component is treated as zero when it
// would be the denominator of a gradient ratio.
inline constexpr double kRatioFloor = 1e-12;

// Per-step error-bound term
//   min_k max_{j != k} |lambda - (g_t[j] / g_t[k]) lambda| * |g_i|_2,
// with components |g_t[k]| < kRatioFloor skipped as k. Returns 0 when all
// components of g_t are equal and +inf when every k is skipped otherwise.
// Runs in linear time.
double epsilon_bound(std::span<const double> g_t, std::span<const double> g_i, double lambda);
double epsilon_bound(const GradVec& g_t, const GradVec& g_i, double lambda);

// Same ratio term scaled by |g_i|_1 instead of |g_i|_2.
double epsilon_bound_l1(std::span<const double> g_t, std::span<const double> g_i, double lambda);

struct BoundTolerance {
    double absolute = 1e-8;
    double relative = 1e-6;

    [[nodiscard]] bool within(double value, double bound) const {
        return value <= bound + absolute + relative * std::abs(bound);
    }
};

struct BoundReport {
    double lambda = 0.0;
    double empirical_delta = 0.0;
    double first_order_sum = 0.0;
    double epsilon_bound = 0.0;
    bool satisfied = false;
    double gap = 0.0;       // |empirical_delta - first_order_sum|
    double l1_bound = std::numeric_limits<double>::quiet_NaN();
    bool skipped = false;
    std::size_t steps = 0;
};

struct FirstOrderCheck {
    std::vector<BoundReport> reports;
    double exponent = std::numeric_limits<double>::quiet_NaN();
};

// For each lambda, runs `steps` plain gradient steps of size lambda on the
// current-task loss (masked inputs, live parameters only) and compares the
// replay-loss change with the accumulated first-order prediction. The
// exponent is the least-squares slope of log(gap) against log(lambda).
// Throws std::runtime_error if a loss turns non-finite.
FirstOrderCheck verify_first_order(const MlpParams& params, const Batch& current,
                                   const Batch& replay, const FeatureMask& mask,
                                   std::span<const double> lambdas, std::size_t steps,
                                   const BoundTolerance& tol = {});

// Checks lambda * sum(g_i) <= epsilon_bound(g_t, g_i, lambda). Reported as
// skipped unless every g_t component is <= 0 and g_t . g_i >= 0.
BoundReport verify_holder_bound(std::span<const double> g_t, std::span<const double> g_i,
                                double lambda, const BoundTolerance& tol = {});

double fit_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace smart
