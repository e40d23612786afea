#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "smart/constraint.hpp"
#include "smart/rng.hpp"

namespace smart {

// A small random network with a current batch, a replay batch and a mask
// pruning a few input features.
struct ToyProblem {
    MlpParams params;
    Batch current;
    Batch replay;
    FeatureMask mask;
};

ToyProblem make_toy_problem(Rng& rng);

// hi, hi/2, hi/4, ... down to the first value <= lo.
std::vector<double> halving_lambdas(double hi, double lo);

struct FirstOrderSuite {
    std::vector<FirstOrderCheck> nets;
    double min_exponent = 0.0;
    std::size_t bound_violations = 0;
};

FirstOrderSuite first_order_suite(std::uint64_t seed, std::size_t nets = 20, std::size_t steps = 5);

// Random gradient pairs with g_t <= 0 component-wise and g_t . g_i >= 0.
struct GradientPair {
    std::vector<double> g_t;
    std::vector<double> g_i;
    double lambda = 0.0;
};

GradientPair random_admissible_pair(Rng& rng);

struct HolderSuite {
    std::size_t trials = 0;
    std::size_t skipped = 0;
    std::size_t violations = 0;
    std::size_t l1_violations = 0;
    double worst_excess = 0.0;  // max of lhs / bound over violations
    std::vector<BoundReport> reports;
};

HolderSuite holder_suite(std::uint64_t seed, std::size_t pairs = 10000);

}  // namespace smart
