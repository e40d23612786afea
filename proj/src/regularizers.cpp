#include "smart/regularizers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace smart {

RegVariant parse_reg_variant(std::string_view name) {
    if (name == "none" || name == "vanilla") return RegVariant::none;
    if (name == "ncc") return RegVariant::ncc;
    if (name == "l2") return RegVariant::l2;
    if (name == "ewc") return RegVariant::ewc;
    if (name == "si") return RegVariant::si;
    if (name == "mas") return RegVariant::mas;
    throw std::invalid_argument("unknown regularizer variant: " + std::string(name));
}

std::string_view to_string(RegVariant variant) {
    switch (variant) {
        case RegVariant::none: return "none";
        case RegVariant::ncc: return "ncc";
        case RegVariant::l2: return "l2";
        case RegVariant::ewc: return "ewc";
        case RegVariant::si: return "si";
        case RegVariant::mas: return "mas";
    }
    return "unknown";
}

void RegConfig::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be finite and >= 0");
    if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("beta must be finite and >= 0");
}

GroupLassoTerm group_lasso(const Eigen::Ref<const Matrix>& first_layer) {
    GroupLassoTerm out;
    out.subgradient = Matrix::Zero(first_layer.rows(), first_layer.cols());
    for (Eigen::Index r = 0; r < first_layer.rows(); ++r) {
        const double norm = first_layer.row(r).norm();
        out.value += norm;
        if (norm > 0.0) out.subgradient.row(r) = first_layer.row(r) / norm;
    }
    return out;
}

Matrix connectivity_strength(const Eigen::Ref<const Matrix>& weights) {
    return weights.array().tanh().abs().matrix();
}

Matrix neuron_correlation(const Eigen::Ref<const Matrix>& weights) {
    const Matrix h = connectivity_strength(weights);
    Matrix gram(h.rows(), h.rows());
    gram.noalias() = h * h.transpose();
    const double fan_out = static_cast<double>(weights.cols());
    return (gram.array().square() / (fan_out * fan_out)).matrix();
}

Vector neuron_importance(const Matrix& correlation) {
    if (correlation.rows() != correlation.cols())
        throw std::invalid_argument("neuron_importance: correlation matrix must be square");
    return correlation.rowwise().sum();
}

Matrix synaptic_importance(const Vector& p, const Vector& q) {
    return p * q.transpose();
}

ImportanceMap refresh_ncc_importance(const MlpParams& params, OutputImportance output) {
    const Layout& layout = params.layout();
    const std::size_t layers = layout.num_layers();
    ImportanceMap map(layout);
    map.neuron.resize(layers + 1);
    for (std::size_t l = 0; l < layers; ++l)
        map.neuron[l] = neuron_importance(neuron_correlation(params.weight(l)));
    if (output == OutputImportance::transpose) {
        map.neuron[layers] =
            neuron_importance(neuron_correlation(params.weight(layers - 1).transpose()));
    } else {
        map.neuron[layers] = Vector::Ones(static_cast<Eigen::Index>(layout.output_dim()));
    }
    for (std::size_t l = 0; l < layers; ++l)
        map.weight(l) = synaptic_importance(map.neuron[l], map.neuron[l + 1]);
    return map;
}

Penalty consolidation_penalty(const MlpParams& params, const SnapshotParams& snapshot,
                              const ImportanceMap& importance) {
    if (!(params.layout() == snapshot.params.layout()) || !(params.layout() == importance.layout()))
        throw std::invalid_argument("consolidation_penalty: shape mismatch");
    const auto diff = (params.flat() - snapshot.params.flat()).array();
    Penalty out{0.0, Gradients(params.layout())};
    out.value = (importance.flat().array() * diff.square()).sum();
    out.grad.flat().array() = 2.0 * importance.flat().array() * diff;
    return out;
}

SiAccumulator::SiAccumulator(const Layout& layout, double damping)
    : damping_(damping),
      path_(Vector::Zero(static_cast<Eigen::Index>(layout.total_size()))),
      task_start_(layout),
      omega_(layout) {}

void SiAccumulator::begin_task(const MlpParams& params) {
    task_start_ = params;
    path_.setZero();
}

void SiAccumulator::record_step(const Gradients& grad, const MlpParams& before,
                                const MlpParams& after) {
    path_.array() -= grad.flat().array() * (after.flat() - before.flat()).array();
}

void SiAccumulator::end_task(const MlpParams& params) {
    const auto drift = (params.flat() - task_start_.flat()).array();
    const Vector contribution = (path_.array() / (drift.square() + damping_)).cwiseMax(0.0).matrix();
    omega_.flat() += contribution;
    path_.setZero();
    task_start_ = params;
}

namespace {

// Sum over samples of f(a_i) outer f(delta_i), divided by n, for every layer.
template <typename Elementwise>
ImportanceMap per_sample_moment(const ForwardPass& pass, const std::vector<Matrix>& deltas,
                                const Layout& layout, Elementwise f) {
    ImportanceMap map(layout);
    const double inv_n = 1.0 / static_cast<double>(pass.activations.front().rows());
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
        const Matrix a = f(pass.activations[l]);
        const Matrix d = f(deltas[l]);
        auto w = map.weight(l);
        w.noalias() = a.transpose() * d;
        w *= inv_n;
        map.bias(l) = d.colwise().sum().transpose() * inv_n;
    }
    return map;
}

}  // namespace

ImportanceMap baseline_importance(RegVariant variant, const MlpParams& params,
                                  const Batch* data, const SiAccumulator* si) {
    const Layout& layout = params.layout();
    switch (variant) {
        case RegVariant::l2: {
            ImportanceMap map(layout);
            map.flat().setOnes();
            return map;
        }
        case RegVariant::ewc: {
            if (data == nullptr || data->size() == 0) throw std::invalid_argument("EWC importance needs data");
            const ForwardPass pass = forward(params, data->inputs);
            const auto deltas =
                backprop_deltas(params, pass, cross_entropy_delta(pass.logits, data->labels));
            return per_sample_moment(pass, deltas, layout,
                                     [](const Matrix& m) -> Matrix { return m.array().square().matrix(); });
        }
        case RegVariant::mas: {
            if (data == nullptr || data->size() == 0) throw std::invalid_argument("MAS importance needs data");
            const ForwardPass pass = forward(params, data->inputs);
            const auto deltas = backprop_deltas(params, pass, 2.0 * pass.logits);
            return per_sample_moment(pass, deltas, layout,
                                     [](const Matrix& m) -> Matrix { return m.array().abs().matrix(); });
        }
        case RegVariant::si: {
            if (si == nullptr) throw std::invalid_argument("SI importance needs an accumulator");
            return si->importance();
        }
        case RegVariant::ncc:
            return refresh_ncc_importance(params);
        case RegVariant::none:
            break;
    }
    throw std::invalid_argument("baseline_importance: unsupported variant " +
                                std::string(to_string(variant)));
}

}  // namespace smart
