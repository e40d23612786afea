#include "smart/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smart {

RestrictedIndexSet::RestrictedIndexSet(const Layout& layout, const FeatureMask& mask)
    : total_(layout.total_size()), first_width_(layout.width(1)), pruned_(mask.pruned) {
    if (mask.dim != layout.input_dim())
        throw std::invalid_argument("restricted index set: mask/layout input dimension mismatch");
    mask.validate();
    indices_.reserve(total_ - pruned_.size() * first_width_);
    auto next_pruned = pruned_.begin();
    for (std::size_t d = 0; d < layout.input_dim(); ++d) {
        if (next_pruned != pruned_.end() && *next_pruned == d) {
            ++next_pruned;
            continue;
        }
        for (std::size_t c = 0; c < first_width_; ++c) indices_.push_back(d * first_width_ + c);
    }
    for (std::size_t i = layout.bias_offset(0); i < total_; ++i) indices_.push_back(i);
}

IndexSetPtr make_index_set(const Layout& layout, const FeatureMask& mask) {
    return std::make_shared<const RestrictedIndexSet>(layout, mask);
}

GradVec::GradVec(IndexSetPtr index_set, Vector values)
    : index_set_(std::move(index_set)), values_(std::move(values)) {
    if (!index_set_ || static_cast<std::size_t>(values_.size()) != index_set_->size())
        throw std::invalid_argument("GradVec: length does not match its index set");
}

GradVec restrict(const ParamSet& grads, const IndexSetPtr& index_set) {
    if (grads.size() != index_set->total())
        throw std::invalid_argument("restrict: gradient size does not match index set");
    const auto idx = index_set->indices();
    Vector out(static_cast<Eigen::Index>(idx.size()));
    const double* src = grads.flat().data();
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = src[idx[i]];
    return GradVec(index_set, std::move(out));
}

GradVec restrict(const ParamSet& grads, const FeatureMask& mask) {
    return restrict(grads, make_index_set(grads.layout(), mask));
}

void scatter(const GradVec& g, ParamSet& target) {
    if (target.size() != g.index_set()->total())
        throw std::invalid_argument("scatter: target size does not match index set");
    const auto idx = g.index_set()->indices();
    double* dst = target.flat().data();
    for (std::size_t i = 0; i < idx.size(); ++i) dst[idx[i]] = g.values()[static_cast<Eigen::Index>(i)];
}

namespace {

void require_same_set(const GradVec& a, const GradVec& b) {
    if (!a.index_set() || !b.index_set())
        throw std::invalid_argument("gradient vector without index set");
    if (a.index_set() != b.index_set() && !(*a.index_set() == *b.index_set()))
        throw std::invalid_argument("gradient vectors live on different index sets");
}

}  // namespace

double violation(const GradVec& g_star, const GradVec& g_ref) {
    require_same_set(g_star, g_ref);
    return g_star.values().dot(g_ref.values());
}

Projection project(const GradVec& g_star, const GradVec& g_ref) {
    require_same_set(g_star, g_ref);
    const double ref_sq = g_ref.values().squaredNorm();
    if (ref_sq == 0.0) return Projection{g_star, true};
    const double coeff = g_star.values().dot(g_ref.values()) / ref_sq;
    Vector out = g_star.values() - coeff * g_ref.values();
    return Projection{GradVec(g_star.index_set(), std::move(out)), false};
}

GradVec reference_gradient(const Batch& replay, const MlpParams& params_prev, const FeatureMask& mask,
                           const IndexSetPtr& index_set) {
    if (replay.size() == 0) throw std::invalid_argument("reference_gradient: empty replay batch");
    const Batch masked{apply_input_mask(replay.inputs, mask), replay.labels};
    return restrict(loss_and_gradient(params_prev, masked).grad, index_set);
}

GradVec reference_gradient(const Batch& replay, const MlpParams& params_prev, const FeatureMask& mask) {
    return reference_gradient(replay, params_prev, mask, make_index_set(params_prev.layout(), mask));
}

namespace {

// Smallest over k of max_{j != k} |1 - g_j / g_k|; NaN when no k qualifies.
double min_max_ratio_gap(std::span<const double> g) {
    const std::size_t n = g.size();
    if (n <= 1) return 0.0;
    if (std::all_of(g.begin(), g.end(), [&](double v) { return v == g.front(); })) return 0.0;

    // Two largest and two smallest values with the index of the extreme, so
    // the "j != k" exclusion costs O(1) per k.
    std::size_t arg_max = 0, arg_min = 0;
    for (std::size_t j = 1; j < n; ++j) {
        if (g[j] > g[arg_max]) arg_max = j;
        if (g[j] < g[arg_min]) arg_min = j;
    }
    double second_max = -std::numeric_limits<double>::infinity();
    double second_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (j != arg_max) second_max = std::max(second_max, g[j]);
        if (j != arg_min) second_min = std::min(second_min, g[j]);
    }

    double best = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(g[k]) < kRatioFloor) continue;
        const double hi = (k == arg_max) ? second_max : g[arg_max];
        const double lo = (k == arg_min) ? second_min : g[arg_min];
        // |1 - x / g_k| is convex in x, so the max over j sits at an extreme.
        const double worst = std::max(std::abs(1.0 - hi / g[k]), std::abs(1.0 - lo / g[k]));
        if (std::isnan(best) || worst < best) best = worst;
    }
    return best;
}

double ratio_term(std::span<const double> g_t, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("epsilon_bound: lambda must be positive");
    const double gap = min_max_ratio_gap(g_t);
    if (std::isnan(gap)) return std::numeric_limits<double>::infinity();
    return lambda * gap;
}

}  // namespace

double epsilon_bound(std::span<const double> g_t, std::span<const double> g_i, double lambda) {
    if (g_t.size() != g_i.size()) throw std::invalid_argument("epsilon_bound: size mismatch");
    const double term = ratio_term(g_t, lambda);
    if (term == 0.0) return 0.0;
    double norm_sq = 0.0;
    for (double v : g_i) norm_sq += v * v;
    return term * std::sqrt(norm_sq);
}

double epsilon_bound(const GradVec& g_t, const GradVec& g_i, double lambda) {
    require_same_set(g_t, g_i);
    return epsilon_bound(std::span<const double>(g_t.values().data(), g_t.size()),
                         std::span<const double>(g_i.values().data(), g_i.size()), lambda);
}

double epsilon_bound_l1(std::span<const double> g_t, std::span<const double> g_i, double lambda) {
    if (g_t.size() != g_i.size()) throw std::invalid_argument("epsilon_bound_l1: size mismatch");
    const double term = ratio_term(g_t, lambda);
    if (term == 0.0) return 0.0;
    double norm = 0.0;
    for (double v : g_i) norm += std::abs(v);
    return term * norm;
}

double fit_log_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_log_slope: need >= 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

FirstOrderCheck verify_first_order(const MlpParams& params, const Batch& current,
                                   const Batch& replay, const FeatureMask& mask,
                                   std::span<const double> lambdas, std::size_t steps,
                                   const BoundTolerance& tol) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] > 0.0)) throw std::invalid_argument("verify_first_order: lambdas must be positive");
        if (i > 0 && lambdas[i] >= lambdas[i - 1])
            throw std::invalid_argument("verify_first_order: lambdas must be decreasing");
    }
    const IndexSetPtr live = make_index_set(params.layout(), mask);
    const Batch masked_current{apply_input_mask(current.inputs, mask), current.labels};
    const Batch masked_replay{apply_input_mask(replay.inputs, mask), replay.labels};
    const double start_loss = loss(params, masked_replay);
    if (!std::isfinite(start_loss)) throw std::runtime_error("verify_first_order: replay loss is not finite");

    FirstOrderCheck check;
    std::vector<double> xs, ys;
    for (double lambda : lambdas) {
        MlpParams theta = params;
        BoundReport report;
        report.lambda = lambda;
        report.steps = steps;
        for (std::size_t s = 0; s < steps; ++s) {
            const GradVec g_cur = restrict(loss_and_gradient(theta, masked_current).grad, live);
            const GradVec g_ref = restrict(loss_and_gradient(theta, masked_replay).grad, live);
            report.first_order_sum += -lambda * g_cur.values().dot(g_ref.values());
            report.epsilon_bound += epsilon_bound(g_cur, g_ref, lambda);
            GradVec step(live, -lambda * g_cur.values());
            Gradients delta(params.layout());
            scatter(step, delta);
            theta.flat() += delta.flat();
        }
        const double end_loss = loss(theta, masked_replay);
        if (!std::isfinite(end_loss))
            throw std::runtime_error("verify_first_order: replay loss diverged at lambda=" +
                                     std::to_string(lambda));
        report.empirical_delta = end_loss - start_loss;
        report.gap = std::abs(report.empirical_delta - report.first_order_sum);
        report.satisfied = tol.within(report.empirical_delta, report.epsilon_bound);
        if (report.gap > 0.0) {
            xs.push_back(lambda);
            ys.push_back(report.gap);
        }
        check.reports.push_back(report);
    }
    if (xs.size() >= 2) check.exponent = fit_log_slope(xs, ys);
    return check;
}

BoundReport verify_holder_bound(std::span<const double> g_t, std::span<const double> g_i,
                                double lambda, const BoundTolerance& tol) {
    if (g_t.size() != g_i.size()) throw std::invalid_argument("verify_holder_bound: size mismatch");
    BoundReport report;
    report.lambda = lambda;
    report.steps = 1;
    double dot = 0.0, sum_i = 0.0;
    bool nonpositive = true;
    for (std::size_t j = 0; j < g_t.size(); ++j) {
        dot += g_t[j] * g_i[j];
        sum_i += g_i[j];
        nonpositive = nonpositive && g_t[j] <= 0.0;
    }
    if (!nonpositive || dot < 0.0) {
        report.skipped = true;
        return report;
    }
    report.empirical_delta = lambda * sum_i;
    report.first_order_sum = report.empirical_delta;
    report.epsilon_bound = epsilon_bound(g_t, g_i, lambda);
    report.l1_bound = epsilon_bound_l1(g_t, g_i, lambda);
    report.satisfied = tol.within(report.empirical_delta, report.epsilon_bound);
    return report;
}

}  // namespace smart
