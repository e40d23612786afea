#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "smart/feature_mask.hpp"

namespace smart {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

// Widths of an MLP, input first: {D, 400, 400, C} for the benchmark net.
class Layout {
public:
    Layout() = default;
    explicit Layout(std::vector<std::size_t> widths);

    [[nodiscard]] std::size_t input_dim() const { return widths_.front(); }
    [[nodiscard]] std::size_t output_dim() const { return widths_.back(); }
    [[nodiscard]] std::size_t num_layers() const { return widths_.size() - 1; }
    [[nodiscard]] std::size_t width(std::size_t i) const { return widths_[i]; }
    [[nodiscard]] const std::vector<std::size_t>& widths() const { return widths_; }

    // Flat storage is layer-major; within a layer the weight block
    // (row-major, fan_in x fan_out) precedes the bias.
    [[nodiscard]] std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    [[nodiscard]] std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + widths_[layer] * widths_[layer + 1];
    }
    [[nodiscard]] std::size_t total_size() const { return offsets_.back(); }

    friend bool operator==(const Layout& a, const Layout& b) { return a.widths_ == b.widths_; }

private:
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
};

// Flat parameter-shaped storage with per-layer matrix views.
class ParamSet {
public:
    ParamSet() = default;
    explicit ParamSet(Layout layout);

    [[nodiscard]] const Layout& layout() const { return layout_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

    MatrixMap weight(std::size_t layer);
    [[nodiscard]] ConstMatrixMap weight(std::size_t layer) const;
    VectorMap bias(std::size_t layer);
    [[nodiscard]] ConstVectorMap bias(std::size_t layer) const;

    Vector& flat() { return values_; }
    [[nodiscard]] const Vector& flat() const { return values_; }

    [[nodiscard]] bool all_finite() const { return values_.allFinite(); }

private:
    Layout layout_;
    Vector values_;
};

struct MlpParams : ParamSet {
    using ParamSet::ParamSet;
};

struct Gradients : ParamSet {
    using ParamSet::ParamSet;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vector m;
    Vector v;
    std::uint64_t step = 0;

    static AdamState zeros(const Layout& layout);
};

struct Batch {
    Matrix inputs;            // n x D
    std::vector<int> labels;  // class index per row

    [[nodiscard]] std::size_t size() const { return labels.size(); }
};

// Activations kept for the backward pass. activations[0] is the input,
// activations[l] the post-ReLU output of hidden layer l.
struct ForwardPass {
    std::vector<Matrix> activations;
    Matrix logits;
};

MlpParams init_params(const Layout& layout, std::uint64_t seed);

ForwardPass forward(const MlpParams& params, const Matrix& inputs);

// Mean softmax cross-entropy.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

// Per-sample d(loss_i)/d(logits); rows are not divided by the batch size.
Matrix cross_entropy_delta(const Matrix& logits, std::span<const int> labels);

// Back-propagates per-sample output deltas. Entry l holds d(loss_i)/d(z_l),
// the pre-activation of layer l, one row per sample.
std::vector<Matrix> backprop_deltas(const MlpParams& params, const ForwardPass& pass,
                                    Matrix output_delta);

// Mean over samples of the per-sample gradients described by `deltas`.
Gradients gradients_from_deltas(const ForwardPass& pass, const std::vector<Matrix>& deltas,
                                const Layout& layout);

// Exact gradient of cross_entropy(forward(params, batch.inputs), batch.labels).
Gradients backward(const MlpParams& params, const Batch& batch, const ForwardPass& pass);

struct LossAndGradient {
    double loss = 0.0;
    Gradients grad;
};

LossAndGradient loss_and_gradient(const MlpParams& params, const Batch& batch);

double loss(const MlpParams& params, const Batch& batch);

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

Matrix apply_input_mask(const Matrix& inputs, const FeatureMask& mask);

// Argmax over all classes, or over `allowed` when non-empty.
std::vector<int> predict(const Matrix& logits, std::span<const int> allowed = {});

}  // namespace smart
