#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "smart/nn.hpp"

using namespace smart;

TEST_SUITE("nn") {

TEST_CASE("init is deterministic with zero biases and bounded weights") {
    const Layout small({4, 3, 2});
    const MlpParams a = init_params(small, 7), b = init_params(small, 7);
    CHECK(a.flat() == b.flat());
    for (std::size_t l = 0; l < small.num_layers(); ++l) CHECK(a.bias(l).isZero(0.0));

    const Layout mnist({784, 400, 400, 10});
    const MlpParams p = init_params(mnist, 3);
    const double bound = std::sqrt(6.0 / 1184.0);
    CHECK(bound == doctest::Approx(0.0712).epsilon(1e-3));
    CHECK(p.weight(0).cwiseAbs().maxCoeff() < bound);
    CHECK(p.weight(0).cwiseAbs().maxCoeff() > 0.9 * bound);
}

TEST_CASE("forward on trivial networks") {
    MlpParams zero(Layout({3, 4, 2}));
    Matrix x = Matrix::Random(5, 3);
    CHECK(forward(zero, x).logits.isZero(0.0));

    MlpParams chain(Layout({1, 1, 1}));
    chain.flat() << 1.0, 0.0, 1.0, 0.0;
    Matrix two(1, 1);
    two << 2.0;
    CHECK(forward(chain, two).logits(0, 0) == 2.0);
}

TEST_CASE("forward matches a loop oracle and is pure") {
    const Layout layout({4, 3, 3, 2});
    Rng rng(11);
    const MlpParams p = oracle::random_params(layout, rng);
    const Batch b = oracle::random_batch(rng, 6, 4, 2);
    const ForwardPass pass = forward(p, b.inputs);
    const auto ref = oracle::logits(p, b.inputs);
    for (std::size_t n = 0; n < ref.size(); ++n)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(std::abs(pass.logits(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) - ref[n][c]) <
                  1e-12);
    CHECK(forward(p, b.inputs).logits == pass.logits);
}

TEST_CASE("cross entropy values") {
    Matrix uniform = Matrix::Zero(3, 2);
    const std::vector<int> y = {0, 1, 1};
    CHECK(cross_entropy(uniform, y) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    Matrix ten = Matrix::Constant(1, 10, 3.5);
    const std::vector<int> y0 = {4};
    CHECK(cross_entropy(ten, y0) == doctest::Approx(std::log(10.0)).epsilon(1e-14));

    Matrix m(1, 2);
    m << 1.0, 0.0;
    const std::vector<int> y1 = {1};
    CHECK(cross_entropy(m, y1) == doctest::Approx(-std::log(1.0 / (std::exp(1.0) + 1.0))).epsilon(1e-12));
    CHECK(cross_entropy(m, y1) == doctest::Approx(1.3133).epsilon(1e-4));

    Matrix sure(1, 2);
    sure << 0.0, 800.0;
    CHECK(cross_entropy(sure, y1) < 1e-300);
    CHECK(std::isfinite(cross_entropy(-sure, y1)));

    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        Matrix z = Matrix::Random(4, 3) * 20.0;
        const std::vector<int> lab = {0, 1, 2, 1};
        CHECK(cross_entropy(z, lab) >= 0.0);
    }
}

TEST_CASE("backward matches finite differences on 100 random nets") {
    Rng rng(2024);
    std::size_t worst_net = 0;
    double worst = 0.0;
    for (std::size_t net = 0; net < 100; ++net) {
        const Layout layout = oracle::random_small_layout(rng);
        const MlpParams p = oracle::random_params(layout, rng);
        const Batch b = oracle::random_batch(rng, 3 + uniform_index(rng, 6), layout.input_dim(), layout.output_dim());
        const Gradients g = loss_and_gradient(p, b).grad;
        const Vector fd = oracle::finite_difference(p, [&](const MlpParams& q) { return oracle::xent(q, b); });
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            const double e = oracle::rel_error(g.flat()[i], fd[i]);
            if (e > worst) {
                worst = e;
                worst_net = net;
            }
        }
    }
    INFO("worst net " << worst_net);
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient of a saturated, separated batch is near zero") {
    MlpParams p(Layout({1, 2}));
    p.flat() << 100.0, -100.0, 0.0, 0.0;
    Batch b;
    b.inputs.resize(2, 1);
    b.inputs << 1.0, -1.0;
    b.labels = {0, 1};
    CHECK(loss_and_gradient(p, b).grad.flat().cwiseAbs().maxCoeff() < 1e-80);
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
    Rng rng(5);
    const Layout layout({5, 4, 4, 3});
    const MlpParams p = oracle::random_params(layout, rng);
    const Batch b = oracle::random_batch(rng, 7, 5, 3);
    Batch twice;
    twice.inputs.resize(14, 5);
    twice.inputs << b.inputs, b.inputs;
    twice.labels = b.labels;
    twice.labels.insert(twice.labels.end(), b.labels.begin(), b.labels.end());
    const Vector g1 = loss_and_gradient(p, b).grad.flat();
    const Vector g2 = loss_and_gradient(p, twice).grad.flat();
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("adam steps") {
    const Layout layout({1, 1});
    MlpParams p(layout);
    p.flat() << 0.3, -0.2;
    const MlpParams before = p;
    AdamState state = AdamState::zeros(layout);
    Gradients zero(layout);
    adam_step(p, zero, state, 0.1);
    CHECK(p.flat() == before.flat());
    CHECK(state.step == 1);

    AdamState fresh = AdamState::zeros(layout);
    Gradients g(layout);
    g.flat() << 0.5, -2.0;
    MlpParams q = before;
    adam_step(q, g, fresh, 0.1);
    const double expected = -0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(q.flat()[0] - before.flat()[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(q.flat()[0] - before.flat()[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(q.flat()[1] > before.flat()[1]);
    CHECK((fresh.v.array() >= 0.0).all());
}

TEST_CASE("input masking") {
    Matrix x(1, 3);
    x << 3, 4, 5;
    CHECK(apply_input_mask(x, FeatureMask::none(3)) == x);
    FeatureMask all{3, {0, 1, 2}, 1e-4};
    CHECK(apply_input_mask(x, all).isZero(0.0));
    FeatureMask one{3, {1}, 1e-4};
    Matrix expected(1, 3);
    expected << 3, 0, 5;
    CHECK(apply_input_mask(x, one) == expected);
}

TEST_CASE("pair-restricted prediction") {
    Matrix z(2, 4);
    z << 0, 1, 5, 2, 9, 0, 1, 3;
    const std::vector<int> pair = {0, 1};
    CHECK(predict(z) == std::vector<int>{2, 0});
    CHECK(predict(z, pair) == std::vector<int>{1, 0});
}

}
