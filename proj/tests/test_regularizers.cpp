#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "smart/regularizers.hpp"

using namespace smart;

namespace {

// Neuron importances for a weight block given as nested vectors, computed
// one sum at a time.
std::vector<double> loop_importance(const oracle::Grid& w) {
    const std::size_t rows = w.size(), cols = w.front().size();
    std::vector<double> p(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t k = 0; k < rows; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += std::abs(std::tanh(w[i][j])) * std::abs(std::tanh(w[k][j]));
            p[i] += s * s / static_cast<double>(cols * cols);
        }
    return p;
}

oracle::Grid transpose(const oracle::Grid& w) {
    oracle::Grid t(w.front().size(), std::vector<double>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < w[i].size(); ++j) t[j][i] = w[i][j];
    return t;
}

}  // namespace

TEST_SUITE("regularizers") {

TEST_CASE("group lasso") {
    Matrix zero = Matrix::Zero(3, 2);
    const auto z = group_lasso(zero);
    CHECK(z.value == 0.0);
    CHECK(z.subgradient.isZero(0.0));

    Matrix row(1, 2);
    row << 3, 4;
    const auto r = group_lasso(row);
    CHECK(r.value == doctest::Approx(5.0));
    CHECK(r.subgradient(0, 0) == doctest::Approx(0.6));
    CHECK(r.subgradient(0, 1) == doctest::Approx(0.8));

    CHECK(group_lasso(Matrix::Identity(2, 2)).value == doctest::Approx(2.0));

    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        Matrix w = Matrix::Random(6, 4);
        for (int i = 0; i < 6; ++i)
            if (uniform01(rng) < 0.3) w.row(i).setZero();
        const auto g = group_lasso(w);
        CHECK((g.value == 0.0) == w.isZero(0.0));
        for (int i = 0; i < 6; ++i) CHECK(g.subgradient.row(i).norm() <= 1.0 + 1e-12);
    }
}

TEST_CASE("connectivity strength") {
    Matrix w(1, 3);
    w << 0.0, -5.0, 5.0;
    const Matrix h = connectivity_strength(w);
    CHECK(h(0, 0) == 0.0);
    CHECK(h(0, 1) == h(0, 2));
    CHECK(h(0, 2) == doctest::Approx(0.999909).epsilon(1e-6));
}

TEST_CASE("neuron correlation and importance") {
    CHECK(neuron_correlation(Matrix::Zero(3, 2)).isZero(0.0));
    CHECK(neuron_importance(neuron_correlation(Matrix::Zero(3, 2))).isZero(0.0));

    const Matrix a = neuron_correlation(Matrix::Identity(2, 2));
    const double diag = std::pow(std::tanh(1.0), 4) / 4.0;
    CHECK(diag == doctest::Approx(0.0841).epsilon(1e-3));
    CHECK(a(0, 0) == doctest::Approx(diag).epsilon(1e-14));
    CHECK(a(1, 1) == doctest::Approx(diag).epsilon(1e-14));
    CHECK(a(0, 1) == 0.0);
    const Vector p = neuron_importance(a);
    CHECK(p[0] == doctest::Approx(diag));
    CHECK(p[1] == doctest::Approx(diag));

    for (int t = 0; t < 1000; ++t) {
        const Matrix w = Matrix::Random(5, 3) * 10.0;
        const Matrix c = neuron_correlation(w);
        CHECK(c == c.transpose());
        CHECK(c.minCoeff() >= 0.0);
        CHECK(c.maxCoeff() < 1.0);
    }

    Matrix w = Matrix::Random(4, 3);
    Matrix permuted = w;
    permuted.row(0).swap(permuted.row(3));
    const Vector p1 = neuron_importance(neuron_correlation(w));
    const Vector p2 = neuron_importance(neuron_correlation(permuted));
    CHECK(p1[0] == doctest::Approx(p2[3]).epsilon(1e-14));
    CHECK(p1[3] == doctest::Approx(p2[0]).epsilon(1e-14));
    CHECK(p1[1] == doctest::Approx(p2[1]).epsilon(1e-14));
}

TEST_CASE("synaptic importance is an outer product") {
    Vector p(2), q(1);
    p << 1, 2;
    q << 3;
    const Matrix s = synaptic_importance(p, q);
    CHECK(s(0, 0) == 3.0);
    CHECK(s(1, 0) == 6.0);
    CHECK(synaptic_importance(Vector::Zero(2), q).isZero(0.0));

    const Matrix r = synaptic_importance(Vector::Random(4), Vector::Random(3));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k)
                for (int m = 0; m < 3; ++m) CHECK(r(i, j) * r(k, m) == doctest::Approx(r(i, m) * r(k, j)));
}

TEST_CASE("consolidation penalty") {
    const Layout scalar({1, 1});
    MlpParams theta(scalar);
    theta.flat() << 1.0, 0.0;
    SnapshotParams anchor{MlpParams(scalar)};
    anchor.params.flat() << 0.5, 0.0;
    ImportanceMap imp(scalar);
    imp.flat() << 2.0, 0.0;
    const Penalty pen = consolidation_penalty(theta, anchor, imp);
    CHECK(pen.value == doctest::Approx(0.5));
    CHECK(pen.grad.flat()[0] == doctest::Approx(2.0));

    const Penalty same = consolidation_penalty(theta, SnapshotParams{theta}, imp);
    CHECK(same.value == 0.0);
    CHECK(same.grad.flat().isZero(0.0));
    const Penalty none = consolidation_penalty(theta, anchor, ImportanceMap(scalar));
    CHECK(none.value == 0.0);
    CHECK(none.grad.flat().isZero(0.0));
}

TEST_CASE("penalty gradient matches finite differences") {
    Rng rng(77);
    double worst = 0.0;
    for (int net = 0; net < 100; ++net) {
        const Layout layout = oracle::random_small_layout(rng);
        const MlpParams p = oracle::random_params(layout, rng);
        const SnapshotParams anchor{oracle::random_params(layout, rng)};
        const ImportanceMap imp = refresh_ncc_importance(anchor.params);
        const Penalty pen = ncc_penalty(p, anchor, imp);
        CHECK(pen.value >= 0.0);
        // Central differences are exact on a quadratic.
        const Vector fd = oracle::finite_difference(
            p, [&](const MlpParams& q) { return ncc_penalty(q, anchor, imp).value; }, 1e-2);
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            if (std::abs(pen.grad.flat()[i]) < 1e-9 && std::abs(fd[i]) < 1e-9) continue;
            worst = std::max(worst, std::abs(pen.grad.flat()[i] - fd[i]) / std::max(std::abs(pen.grad.flat()[i]), std::abs(fd[i])));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("ncc importance on a 2-2-1 net matches a loop evaluation") {
    MlpParams p(Layout({2, 2, 1}));
    p.weight(0) << 0.5, -1.2, 2.0, 0.3;
    p.weight(1) << -0.7, 1.5;
    const ImportanceMap imp = refresh_ncc_importance(p);

    const auto w0 = oracle::weight_grid(p, 0), w1 = oracle::weight_grid(p, 1);
    const auto p0 = loop_importance(w0);
    const auto p1 = loop_importance(w1);
    const auto p2 = loop_importance(transpose(w1));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(imp.weight(0)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                  doctest::Approx(p0[i] * p1[j]).epsilon(1e-13));
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(imp.weight(1)(static_cast<Eigen::Index>(i), 0) == doctest::Approx(p1[i] * p2[0]).epsilon(1e-13));
    CHECK(imp.bias(0).isZero(0.0));
    CHECK(imp.bias(1).isZero(0.0));

    const ImportanceMap uni = refresh_ncc_importance(p, OutputImportance::uniform);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(uni.weight(1)(static_cast<Eigen::Index>(i), 0) == doctest::Approx(p1[i]).epsilon(1e-13));

    CHECK(refresh_ncc_importance(MlpParams(Layout({3, 4, 2}))).flat().isZero(0.0));
}

TEST_CASE("ncc importance ignores weight signs") {
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        const Layout layout = oracle::random_small_layout(rng);
        const MlpParams p = oracle::random_params(layout, rng);
        MlpParams flipped = p;
        for (Eigen::Index i = 0; i < flipped.flat().size(); ++i)
            if (uniform01(rng) < 0.5) flipped.flat()[i] = -flipped.flat()[i];
        CHECK(refresh_ncc_importance(p).flat() == refresh_ncc_importance(flipped).flat());
    }
}

TEST_CASE("baseline importances") {
    Rng rng(4);
    const Layout layout({4, 3, 3, 2});
    const MlpParams p = oracle::random_params(layout, rng);
    const Batch b = oracle::random_batch(rng, 6, 4, 2);

    CHECK((baseline_importance(RegVariant::l2, p, nullptr).flat().array() == 1.0).all());

    SUBCASE("ewc is the mean squared per-sample gradient") {
        const ImportanceMap ewc = baseline_importance(RegVariant::ewc, p, &b);
        Vector expected = Vector::Zero(p.flat().size());
        for (std::size_t n = 0; n < b.size(); ++n) {
            Batch one;
            one.inputs = b.inputs.row(static_cast<Eigen::Index>(n));
            one.labels = {b.labels[n]};
            expected.array() += loss_and_gradient(p, one).grad.flat().array().square();
        }
        expected /= static_cast<double>(b.size());
        CHECK((ewc.flat() - expected).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("ewc vanishes with zero gradients") {
        MlpParams sat(Layout({1, 2}));
        sat.flat() << 400.0, -400.0, 0.0, 0.0;
        Batch s;
        s.inputs.resize(2, 1);
        s.inputs << 1.0, -1.0;
        s.labels = {0, 1};
        CHECK(baseline_importance(RegVariant::ewc, sat, &s).flat().cwiseAbs().maxCoeff() < 1e-300);
    }

    SUBCASE("mas is the mean absolute gradient of the squared output norm") {
        const ImportanceMap mas = baseline_importance(RegVariant::mas, p, &b);
        Vector expected = Vector::Zero(p.flat().size());
        for (std::size_t n = 0; n < b.size(); ++n) {
            const Matrix x = b.inputs.row(static_cast<Eigen::Index>(n));
            const Vector g = oracle::finite_difference(p, [&](const MlpParams& q) {
                double s = 0.0;
                const auto z = oracle::logits(q, x);
                for (double v : z[0]) s += v * v;
                return s;
            });
            expected.array() += g.array().abs();
        }
        expected /= static_cast<double>(b.size());
        CHECK((mas.flat() - expected).cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("mas on a one-weight linear model") {
        MlpParams lin(Layout({1, 1}));
        lin.flat() << 1.0, 0.0;
        Batch xs;
        xs.inputs.resize(2, 1);
        xs.inputs << 1.0, 2.0;
        xs.labels = {0, 0};
        CHECK(baseline_importance(RegVariant::mas, lin, &xs).flat()[0] == doctest::Approx(5.0));
    }
}

TEST_CASE("synaptic intelligence") {
    const Layout layout({1, 1});
    SiAccumulator si(layout, 1e-3);
    MlpParams start(layout);
    si.begin_task(start);
    MlpParams after = start;
    after.flat()[0] = -0.1;
    Gradients g(layout);
    g.flat() << 1.0, 0.0;
    si.record_step(g, start, after);
    si.end_task(after);
    CHECK(si.importance().flat()[0] == doctest::Approx(0.1 / (0.01 + 1e-3)));
    CHECK(si.importance().flat()[1] == 0.0);

    Rng rng(12);
    const Layout big({3, 4, 2});
    SiAccumulator acc(big);
    MlpParams p = oracle::random_params(big, rng);
    for (int task = 0; task < 3; ++task) {
        acc.begin_task(p);
        for (int s = 0; s < 20; ++s) {
            Gradients gr(big);
            for (Eigen::Index i = 0; i < gr.flat().size(); ++i) gr.flat()[i] = normal01(rng);
            MlpParams next = p;
            for (Eigen::Index i = 0; i < next.flat().size(); ++i) next.flat()[i] += 0.01 * normal01(rng);
            acc.record_step(gr, p, next);
            p = next;
        }
        acc.end_task(p);
        CHECK(acc.importance().flat().minCoeff() >= 0.0);
    }
}

}
