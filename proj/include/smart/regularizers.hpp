#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "smart/nn.hpp"

namespace smart {

// Per-parameter importance laid out exactly like MlpParams. NCC fills only
// weight blocks; baseline schemes may also weight biases. `neuron` carries
// the per-layer neuron importances p^(l) when the scheme defines them.
struct ImportanceMap : ParamSet {
    using ParamSet::ParamSet;
    std::vector<Vector> neuron;
};

// Frozen parameters the consolidation penalty anchors to.
struct SnapshotParams {
    MlpParams params;
};

enum class RegVariant { none, ncc, l2, ewc, si, mas };

RegVariant parse_reg_variant(std::string_view name);
std::string_view to_string(RegVariant variant);

struct RegConfig {
    double alpha = 0.0005;
    double beta = 0.0;
    RegVariant variant = RegVariant::ncc;

    void validate() const;
};

// ---- schematic-memory sparsity -------------------------------------------

struct GroupLassoTerm {
    double value = 0.0;
    Matrix subgradient;
};

// l2,1 norm over the rows of the first-layer weights (one group per input
// feature). Zero rows get a zero subgradient.
GroupLassoTerm group_lasso(const Eigen::Ref<const Matrix>& first_layer);

// ---- neuronal correlation consolidation ----------------------------------

// |tanh(w)| element-wise.
Matrix connectivity_strength(const Eigen::Ref<const Matrix>& weights);

// (h h^T) squared element-wise, scaled by 1 / fan_out^2, with h = |tanh(W)|.
Matrix neuron_correlation(const Eigen::Ref<const Matrix>& weights);

// Weighted degree centrality: row sums of the correlation matrix.
Vector neuron_importance(const Matrix& correlation);

// Outer product p q^T.
Matrix synaptic_importance(const Vector& p, const Vector& q);

enum class OutputImportance {
    transpose,  // correlation of output neurons from their incoming weights
    uniform,    // p^(L) = 1
};

ImportanceMap refresh_ncc_importance(const MlpParams& params,
                                     OutputImportance output = OutputImportance::transpose);

struct Penalty {
    double value = 0.0;
    Gradients grad;
};

// sum P (theta - theta_hat)^2 over every parameter; with an NCC map the bias
// entries are zero so only weights contribute.
Penalty consolidation_penalty(const MlpParams& params, const SnapshotParams& snapshot,
                              const ImportanceMap& importance);

inline Penalty ncc_penalty(const MlpParams& params, const SnapshotParams& snapshot,
                           const ImportanceMap& importance) {
    return consolidation_penalty(params, snapshot, importance);
}

// ---- baseline importance schemes -----------------------------------------

// Path-integral importance accumulated along the optimisation trajectory.
class SiAccumulator {
public:
    explicit SiAccumulator(const Layout& layout, double damping = 1e-3);

    void begin_task(const MlpParams& params);
    // `grad` is the unregularised loss gradient used for the step that moved
    // the parameters from `before` to `after`.
    void record_step(const Gradients& grad, const MlpParams& before, const MlpParams& after);
    // Folds this task's path integral into the running importance.
    void end_task(const MlpParams& params);

    [[nodiscard]] const ImportanceMap& importance() const { return omega_; }
    [[nodiscard]] double damping() const { return damping_; }

private:
    double damping_;
    Vector path_;
    MlpParams task_start_;
    ImportanceMap omega_;
};

// L2 -> ones; EWC -> mean squared per-sample log-likelihood gradient;
// MAS -> mean absolute per-sample gradient of the squared output norm;
// SI -> the accumulator's current importance.
ImportanceMap baseline_importance(RegVariant variant, const MlpParams& params,
                                  const Batch* data, const SiAccumulator* si = nullptr);

}  // namespace smart
