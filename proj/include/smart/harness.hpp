#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smart/constraint.hpp"
#include "smart/data.hpp"
#include "smart/memory.hpp"
#include "smart/nn.hpp"
#include "smart/regularizers.hpp"

namespace smart {

enum class Method { smart, gss, ablation };
enum class Enforcement { project, joint };
// Point at which the replay reference gradient is evaluated.
enum class RefAt { prev, current };
enum class EvalMode { pair, multiclass };
// shared: one softmax over every class; domain: one output per within-task
// position, shared by all tasks.
enum class Head { shared, domain };
enum class CorruptScope { task, global };

Method parse_method(std::string_view name);
Enforcement parse_enforcement(std::string_view name);
RefAt parse_ref_at(std::string_view name);
EvalMode parse_eval_mode(std::string_view name);
Head parse_head(std::string_view name);
CorruptScope parse_corrupt_scope(std::string_view name);
std::string method_name(Method method, RegVariant variant);
std::string_view to_string(Enforcement e);
std::string_view to_string(EvalMode e);
std::string_view to_string(RefAt r);
std::string_view to_string(CorruptScope s);
std::string_view to_string(Head h);

struct RunConfig {
    std::string dataset = "mnist";  // mnist | csv:<path>
    std::filesystem::path mnist_dir;
    Method method = Method::smart;
    RegVariant variant = RegVariant::ncc;  // ablation regulariser
    std::size_t buffer = 300;
    BudgetMode budget_mode = BudgetMode::units;
    double alpha = 0.0005;
    double beta = 0.001;
    double epsilon = 1e-4;
    double lr = 1e-4;
    std::size_t batch_size = 50;
    std::size_t inner_iters = 100;
    std::size_t replay_batch = 50;
    std::size_t gss_comparisons = 10;
    std::size_t per_class = 500;
    std::vector<std::size_t> hidden = {400, 400};
    Enforcement enforce = Enforcement::joint;
    RefAt ref_at = RefAt::prev;
    EvalMode eval = EvalMode::pair;
    Head head = Head::domain;
    double corrupt = 0.0;
    CorruptScope corrupt_scope = CorruptScope::task;
    std::size_t refresh_every = 1;  // NCC importance refresh cadence, in batches
    OutputImportance output_importance = OutputImportance::transpose;
    // Regulariser-only protocol.
    std::size_t ablation_epochs = 4;
    std::size_t ablation_batch = 128;
    double ablation_lr = 1e-3;
    Head ablation_head = Head::domain;
    std::optional<double> reg_strength;  // unset: per-variant default
    bool ablation_full_tasks = true;  // every training row of each pair
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t threads = 0;  // 0 = hardware concurrency
    std::filesystem::path out_dir = "results";

    // Throws std::invalid_argument with the offending key.
    void validate() const;
    [[nodiscard]] std::string label() const;
};

// Training and evaluation data for one seed.
struct TaskStream {
    std::shared_ptr<const Dataset> train;
    std::vector<int> train_labels;  // possibly corrupted; one per train row
    std::shared_ptr<const Dataset> test;
    std::vector<TaskSpec> tasks;
};

// Tuned consolidation strength for each regulariser under the ablation
// protocol.
double default_reg_strength(RegVariant variant);

// Loads the benchmark named by cfg.dataset and builds the task sequence and
// label corruption for `seed`. MNIST files are read once per process.
TaskStream make_stream(const RunConfig& cfg, std::uint64_t seed);

struct TimelineRow {
    std::size_t batch = 0;
    std::size_t effective_samples = 0;
    std::size_t used_units = 0;
    std::size_t budget_units = 0;
    std::size_t pruned_features = 0;
    std::map<int, std::size_t> per_task;
};

struct Metrics {
    std::string method;
    RunConfig config;
    std::uint64_t seed = 0;
    std::vector<double> per_task_accuracy;
    double average_accuracy = 0.0;
    std::vector<double> per_task_alt;  // the other evaluation mode
    double average_alt = 0.0;
    std::vector<TimelineRow> timeline;
    std::vector<BoundReport> bounds;
    std::size_t effective_samples_final = 0;
    std::size_t used_units_final = 0;
    std::size_t projections = 0;
    double min_post_projection_cosine = 0.0;
    double wall_s = 0.0;
    bool diverged = false;
    std::string diagnostic;
};

Metrics evaluate(const MlpParams& params, const std::vector<TaskSpec>& tasks, const Dataset& test,
                 EvalMode mode, Head head = Head::shared);

using ProgressFn = std::function<void(const std::string&)>;

Metrics run_smart(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed,
                  const ProgressFn& progress = {});
Metrics run_gss_greedy_baseline(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed,
                                const ProgressFn& progress = {});
Metrics run_ablation(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed,
                     const ProgressFn& progress = {});

// Dispatches on cfg.method after building the seed's stream.
Metrics run_one(const RunConfig& cfg, std::uint64_t seed, const ProgressFn& progress = {});

// Every (config, seed) pair on a worker pool; results keep input order.
std::vector<Metrics> run_all(const std::vector<RunConfig>& configs, std::size_t threads,
                             const ProgressFn& progress = {});

struct SweepRow {
    std::string parameter;  // "alpha" or "beta"
    double value = 0.0;
    double corrupt = 0.0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<Metrics> runs;
};

// alpha grid at cfg.beta, then beta grid at cfg.alpha, each at cfg.corrupt.
std::vector<SweepRow> sensitivity_sweep(const RunConfig& cfg, const std::vector<double>& alphas,
                                        const std::vector<double>& betas,
                                        const ProgressFn& progress = {});

void emit_results(const std::vector<Metrics>& metrics, const std::filesystem::path& out_dir);
void emit_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir);
void emit_bounds(const std::vector<BoundReport>& reports, const std::string& kind,
                 const std::filesystem::path& out_dir);

// The results.csv line for one run, without a trailing newline.
std::string results_row(const Metrics& m, std::size_t num_tasks);
std::string results_header(std::size_t num_tasks);

double mean(const std::vector<double>& xs);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& xs);

}  // namespace smart
