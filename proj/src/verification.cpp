#include "smart/verification.hpp"

#include <algorithm>
#include <cmath>

namespace smart {

ToyProblem make_toy_problem(Rng& rng) {
    const std::size_t dim = 4 + uniform_index(rng, 5);
    const std::size_t hidden = 5 + uniform_index(rng, 6);
    const std::size_t classes = 2 + uniform_index(rng, 3);
    const Layout layout({dim, hidden, hidden, classes});
    ToyProblem p;
    p.params = init_params(layout, rng());

    p.mask = FeatureMask::none(dim);
    p.mask.epsilon = 1e-4;
    for (std::size_t d = 0; d < dim; ++d)
        if (uniform01(rng) < 0.25) p.mask.pruned.push_back(d);
    if (p.mask.pruned.size() == dim) p.mask.pruned.pop_back();

    auto make_batch = [&](std::size_t n) {
        Batch b;
        b.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < b.inputs.size(); ++i) b.inputs.data()[i] = normal01(rng);
        for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(uniform_index(rng, classes)));
        return b;
    };
    p.current = make_batch(4 + uniform_index(rng, 8));
    p.replay = make_batch(4 + uniform_index(rng, 8));
    return p;
}

std::vector<double> halving_lambdas(double hi, double lo) {
    std::vector<double> out;
    for (double l = hi;; l /= 2.0) {
        out.push_back(l);
        if (l <= lo) break;
    }
    return out;
}

FirstOrderSuite first_order_suite(std::uint64_t seed, std::size_t nets, std::size_t steps) {
    Rng rng(seed);
    const auto lambdas = halving_lambdas(1e-2, 1e-5);
    FirstOrderSuite suite;
    suite.min_exponent = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < nets; ++n) {
        const ToyProblem p = make_toy_problem(rng);
        FirstOrderCheck check = verify_first_order(p.params, p.current, p.replay, p.mask, lambdas, steps);
        suite.min_exponent = std::min(suite.min_exponent, std::isnan(check.exponent) ? -1.0 : check.exponent);
        for (const auto& r : check.reports) suite.bound_violations += !r.satisfied;
        suite.nets.push_back(std::move(check));
    }
    return suite;
}

GradientPair random_admissible_pair(Rng& rng) {
    GradientPair pair;
    const std::size_t n = 2 + uniform_index(rng, 49);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        pair.g_t.push_back(-std::abs(normal01(rng)));
        pair.g_i.push_back(normal01(rng));
        dot += pair.g_t.back() * pair.g_i.back();
    }
    if (dot < 0.0)
        for (double& v : pair.g_i) v = -v;
    pair.lambda = std::pow(10.0, uniform_real(rng, -5.0, -1.0));
    return pair;
}

HolderSuite holder_suite(std::uint64_t seed, std::size_t pairs) {
    Rng rng(seed);
    HolderSuite suite;
    for (std::size_t i = 0; i < pairs; ++i) {
        const GradientPair p = random_admissible_pair(rng);
        BoundReport r = verify_holder_bound(p.g_t, p.g_i, p.lambda);
        ++suite.trials;
        if (r.skipped) {
            ++suite.skipped;
            continue;
        }
        if (!r.satisfied) {
            ++suite.violations;
            suite.worst_excess = std::max(suite.worst_excess, r.empirical_delta / r.epsilon_bound);
        }
        if (!BoundTolerance{}.within(r.empirical_delta, r.l1_bound)) ++suite.l1_violations;
        suite.reports.push_back(r);
    }
    return suite;
}

}  // namespace smart
