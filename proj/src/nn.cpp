#include "smart/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "smart/rng.hpp"

namespace smart {

Layout::Layout(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("layout needs at least input and output widths");
    for (std::size_t w : widths_)
        if (w == 0) throw std::invalid_argument("layout widths must be >= 1");
    offsets_.reserve(widths_.size());
    std::size_t offset = 0;
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
        offsets_.push_back(offset);
    }
}

ParamSet::ParamSet(Layout layout)
    : layout_(std::move(layout)), values_(Vector::Zero(static_cast<Eigen::Index>(layout_.total_size()))) {}

MatrixMap ParamSet::weight(std::size_t layer) {
    return MatrixMap(values_.data() + layout_.weight_offset(layer),
                     static_cast<Eigen::Index>(layout_.width(layer)),
                     static_cast<Eigen::Index>(layout_.width(layer + 1)));
}

ConstMatrixMap ParamSet::weight(std::size_t layer) const {
    return ConstMatrixMap(values_.data() + layout_.weight_offset(layer),
                          static_cast<Eigen::Index>(layout_.width(layer)),
                          static_cast<Eigen::Index>(layout_.width(layer + 1)));
}

VectorMap ParamSet::bias(std::size_t layer) {
    return VectorMap(values_.data() + layout_.bias_offset(layer),
                     static_cast<Eigen::Index>(layout_.width(layer + 1)));
}

ConstVectorMap ParamSet::bias(std::size_t layer) const {
    return ConstVectorMap(values_.data() + layout_.bias_offset(layer),
                          static_cast<Eigen::Index>(layout_.width(layer + 1)));
}

AdamState AdamState::zeros(const Layout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_size());
    return AdamState{Vector::Zero(n), Vector::Zero(n), 0};
}

MlpParams init_params(const Layout& layout, std::uint64_t seed) {
    MlpParams params(layout);
    Rng rng(seed);
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        const double bound =
            std::sqrt(6.0 / static_cast<double>(layout.width(l) + layout.width(l + 1)));
        auto w = params.weight(l);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform_real(rng, -bound, bound);
    }
    return params;
}

ForwardPass forward(const MlpParams& params, const Matrix& inputs) {
    const Layout& layout = params.layout();
    if (static_cast<std::size_t>(inputs.cols()) != layout.input_dim())
        throw std::invalid_argument("forward: input has " + std::to_string(inputs.cols()) +
                                    " columns, network expects " +
                                    std::to_string(layout.input_dim()));
    ForwardPass pass;
    pass.activations.reserve(layout.num_layers());
    pass.activations.push_back(inputs);
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        Matrix z(inputs.rows(), static_cast<Eigen::Index>(layout.width(l + 1)));
        z.noalias() = pass.activations.back() * params.weight(l);
        z.rowwise() += params.bias(l).transpose();
        if (l + 1 == layout.num_layers()) {
            pass.logits = std::move(z);
        } else {
            pass.activations.push_back(z.cwiseMax(0.0));
        }
    }
    return pass;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw std::invalid_argument("cross_entropy: logits/labels size mismatch");
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const double peak = row.maxCoeff();
        const double lse = peak + std::log((row.array() - peak).exp().sum());
        total += lse - row(labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(labels.size());
}

Matrix cross_entropy_delta(const Matrix& logits, std::span<const int> labels) {
    Matrix delta(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const double peak = row.maxCoeff();
        auto e = (row.array() - peak).exp();
        delta.row(i) = e / e.sum();
        delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    return delta;
}

std::vector<Matrix> backprop_deltas(const MlpParams& params, const ForwardPass& pass,
                                    Matrix output_delta) {
    const std::size_t layers = params.layout().num_layers();
    std::vector<Matrix> deltas(layers);
    deltas[layers - 1] = std::move(output_delta);
    for (std::size_t l = layers - 1; l > 0; --l) {
        Matrix d(deltas[l].rows(), params.weight(l).rows());
        d.noalias() = deltas[l] * params.weight(l).transpose();
        deltas[l - 1] = (pass.activations[l].array() > 0.0).select(d, 0.0);
    }
    return deltas;
}

Gradients gradients_from_deltas(const ForwardPass& pass, const std::vector<Matrix>& deltas,
                                const Layout& layout) {
    Gradients grads(layout);
    const double inv_n = 1.0 / static_cast<double>(pass.activations.front().rows());
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        auto w = grads.weight(l);
        w.noalias() = pass.activations[l].transpose() * deltas[l];
        w *= inv_n;
        grads.bias(l) = deltas[l].colwise().sum().transpose() * inv_n;
    }
    return grads;
}

Gradients backward(const MlpParams& params, const Batch& batch, const ForwardPass& pass) {
    auto deltas = backprop_deltas(params, pass, cross_entropy_delta(pass.logits, batch.labels));
    return gradients_from_deltas(pass, deltas, params.layout());
}

LossAndGradient loss_and_gradient(const MlpParams& params, const Batch& batch) {
    ForwardPass pass = forward(params, batch.inputs);
    LossAndGradient out;
    out.loss = cross_entropy(pass.logits, batch.labels);
    out.grad = backward(params, batch, pass);
    return out;
}

double loss(const MlpParams& params, const Batch& batch) {
    return cross_entropy(forward(params, batch.inputs).logits, batch.labels);
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& config) {
    if (grads.size() != params.size() || static_cast<std::size_t>(state.m.size()) != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    const auto& g = grads.flat().array();
    state.m.array() = config.beta1 * state.m.array() + (1.0 - config.beta1) * g;
    state.v.array() = config.beta2 * state.v.array() + (1.0 - config.beta2) * g.square();
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    params.flat().array() -=
        lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

Matrix apply_input_mask(const Matrix& inputs, const FeatureMask& mask) {
    if (static_cast<std::size_t>(inputs.cols()) != mask.dim)
        throw std::invalid_argument("apply_input_mask: mask dimension mismatch");
    Matrix out = inputs;
    for (std::size_t d : mask.pruned) out.col(static_cast<Eigen::Index>(d)).setZero();
    return out;
}

std::vector<int> predict(const Matrix& logits, std::span<const int> allowed) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = -1;
        double best_value = -std::numeric_limits<double>::infinity();
        if (allowed.empty()) {
            for (Eigen::Index c = 0; c < logits.cols(); ++c)
                if (logits(i, c) > best_value) {
                    best_value = logits(i, c);
                    best = static_cast<int>(c);
                }
        } else {
            for (int c : allowed)
                if (logits(i, c) > best_value) {
                    best_value = logits(i, c);
                    best = c;
                }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

}  // namespace smart
