#include "smart/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace smart {

Method parse_method(std::string_view name) {
    if (name == "smart") return Method::smart;
    if (name == "gss" || name == "gss_greedy" || name == "gss-greedy") return Method::gss;
    if (name == "ablation") return Method::ablation;
    throw std::invalid_argument("unknown method: " + std::string(name));
}

Enforcement parse_enforcement(std::string_view name) {
    if (name == "project") return Enforcement::project;
    if (name == "joint") return Enforcement::joint;
    throw std::invalid_argument("unknown enforcement mode: " + std::string(name));
}

RefAt parse_ref_at(std::string_view name) {
    if (name == "prev") return RefAt::prev;
    if (name == "current") return RefAt::current;
    throw std::invalid_argument("unknown reference point: " + std::string(name));
}

EvalMode parse_eval_mode(std::string_view name) {
    if (name == "pair") return EvalMode::pair;
    if (name == "multiclass") return EvalMode::multiclass;
    throw std::invalid_argument("unknown eval mode: " + std::string(name));
}

Head parse_head(std::string_view name) {
    if (name == "shared") return Head::shared;
    if (name == "domain") return Head::domain;
    throw std::invalid_argument("unknown head: " + std::string(name));
}

CorruptScope parse_corrupt_scope(std::string_view name) {
    if (name == "task") return CorruptScope::task;
    if (name == "global") return CorruptScope::global;
    throw std::invalid_argument("unknown corruption scope: " + std::string(name));
}

std::string method_name(Method method, RegVariant variant) {
    switch (method) {
        case Method::smart: return "smart";
        case Method::gss: return "gss_greedy";
        case Method::ablation: return "ablation:" + std::string(to_string(variant));
    }
    return "unknown";
}

std::string_view to_string(Enforcement e) { return e == Enforcement::project ? "project" : "joint"; }
std::string_view to_string(EvalMode e) { return e == EvalMode::pair ? "pair" : "multiclass"; }
std::string_view to_string(RefAt r) { return r == RefAt::prev ? "prev" : "current"; }
std::string_view to_string(CorruptScope s) { return s == CorruptScope::task ? "task" : "global"; }
std::string_view to_string(Head h) { return h == Head::shared ? "shared" : "domain"; }

void RunConfig::validate() const {
    auto require = [](bool ok, const char* key) {
        if (!ok) throw std::invalid_argument(std::string("invalid value for '") + key + "'");
    };
    require(dataset == "mnist" || dataset.rfind("csv:", 0) == 0, "dataset");
    require(method != Method::smart || buffer > 0, "buffer");
    require(method != Method::gss || buffer > 0, "buffer");
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha");
    require(std::isfinite(beta) && beta >= 0.0, "beta");
    require(std::isfinite(epsilon) && epsilon >= 0.0, "epsilon");
    require(std::isfinite(lr) && lr > 0.0, "lr");
    require(batch_size > 0, "batch_size");
    require(inner_iters > 0, "inner_iters");
    require(replay_batch > 0, "replay_batch");
    require(per_class > 0, "per_class");
    require(!hidden.empty() && std::all_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h > 0; }),
            "hidden");
    require(corrupt >= 0.0 && corrupt <= 1.0, "corrupt");
    require(refresh_every > 0, "refresh_every");
    require(ablation_epochs > 0, "ablation_epochs");
    require(ablation_batch > 0, "ablation_batch");
    require(std::isfinite(ablation_lr) && ablation_lr > 0.0, "ablation_lr");
    require(!reg_strength || (std::isfinite(*reg_strength) && *reg_strength >= 0.0), "reg_strength");
    require(!seeds.empty(), "seeds");
}

std::string RunConfig::label() const {
    std::ostringstream os;
    os << method_name(method, variant) << " M=" << buffer << " corrupt=" << corrupt << " alpha=" << alpha
       << " beta=" << beta;
    return os.str();
}

double default_reg_strength(RegVariant variant) {
    switch (variant) {
        case RegVariant::none: return 0.0;
        case RegVariant::ncc: return 1e8;
        case RegVariant::l2: return 1.0;
        case RegVariant::ewc: return 1e5;
        case RegVariant::si: return 1.0;
        case RegVariant::mas: return 1.0;
    }
    return 0.0;
}

// ---- data -------------------------------------------------------------------

namespace {

std::shared_ptr<const MnistSplits> mnist_cache(const std::filesystem::path& dir) {
    static std::mutex mu;
    static std::map<std::filesystem::path, std::shared_ptr<const MnistSplits>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[dir];
    if (!slot) slot = std::make_shared<const MnistSplits>(load_mnist_dir(dir));
    return slot;
}

std::filesystem::path resolve_mnist_dir(const RunConfig& cfg) {
    if (!cfg.mnist_dir.empty()) return cfg.mnist_dir;
    if (const char* env = std::getenv("SMART_MNIST_DIR")) return env;
    return "data/mnist";
}

constexpr std::uint64_t kCorruptSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kBatchSalt = 0xbf58476d1ce4e5b9ULL;
constexpr std::uint64_t kReplaySalt = 0x94d049bb133111ebULL;

}  // namespace

TaskStream make_stream(const RunConfig& cfg, std::uint64_t seed) {
    TaskStream stream;
    if (cfg.dataset == "mnist") {
        const auto splits = mnist_cache(resolve_mnist_dir(cfg));
        // Aliasing constructors keep the cached splits alive without copying.
        stream.train = std::shared_ptr<const Dataset>(splits, &splits->train);
        stream.test = std::shared_ptr<const Dataset>(splits, &splits->test);
        if (cfg.method == Method::ablation && cfg.ablation_full_tasks) {
            for (int t = 0; t < 5; ++t) {
                TaskSpec task;
                task.id = t;
                task.classes = {2 * t, 2 * t + 1};
                for (std::size_t i = 0; i < splits->train.size(); ++i)
                    if (splits->train.labels[i] / 2 == t) task.train.push_back(i);
                for (std::size_t i = 0; i < splits->test.size(); ++i)
                    if (splits->test.labels[i] / 2 == t) task.test.push_back(i);
                stream.tasks.push_back(std::move(task));
            }
        } else {
            stream.tasks = make_disjoint_tasks(splits->train, splits->test, seed, cfg.per_class);
        }
    } else {
        auto csv = std::make_shared<CsvStream>(load_csv_stream(cfg.dataset.substr(4)));
        stream.train = std::shared_ptr<const Dataset>(csv, &csv->data);
        stream.test = stream.train;
        stream.tasks = csv->tasks;
    }

    stream.train_labels = stream.train->labels;
    if (cfg.corrupt > 0.0) {
        std::vector<int> all_classes(stream.train->num_classes);
        std::iota(all_classes.begin(), all_classes.end(), 0);
        for (const TaskSpec& task : stream.tasks) {
            std::vector<int> original;
            for (std::size_t r : task.train) original.push_back(stream.train->labels[r]);
            CorruptionConfig cc;
            cc.ratio = cfg.corrupt;
            cc.seed = seed ^ (kCorruptSalt * static_cast<std::uint64_t>(task.id + 1));
            cc.class_universe = cfg.corrupt_scope == CorruptScope::task ? task.classes : all_classes;
            const auto noisy = corrupt_labels(original, cc);
            for (std::size_t i = 0; i < task.train.size(); ++i) stream.train_labels[task.train[i]] = noisy[i];
        }
    }
    return stream;
}

// ---- evaluation -------------------------------------------------------------

namespace {

int domain_label(const TaskSpec& task, int label) {
    const auto it = std::find(task.classes.begin(), task.classes.end(), label);
    if (it != task.classes.end()) return static_cast<int>(it - task.classes.begin());
    return label % static_cast<int>(task.classes.size());
}

std::size_t domain_width(const std::vector<TaskSpec>& tasks) {
    std::size_t w = 2;
    for (const auto& t : tasks) w = std::max(w, t.classes.size());
    return w;
}

Layout make_layout(const RunConfig& cfg, std::size_t input_dim, std::size_t outputs) {
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(outputs);
    return Layout(std::move(widths));
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace

Metrics evaluate(const MlpParams& params, const std::vector<TaskSpec>& tasks, const Dataset& test,
                 EvalMode mode, Head head) {
    Metrics m;
    constexpr std::size_t kChunk = 2048;
    for (const TaskSpec& task : tasks) {
        std::vector<int> predicted, truth;
        for (std::size_t start = 0; start < task.test.size(); start += kChunk) {
            const std::size_t len = std::min(kChunk, task.test.size() - start);
            const Batch batch = gather(test, std::span<const std::size_t>(task.test).subspan(start, len));
            const ForwardPass pass = forward(params, batch.inputs);
            std::vector<int> p;
            if (head == Head::domain) {
                p = predict(pass.logits);
                for (int label : batch.labels) truth.push_back(domain_label(task, label));
            } else {
                p = mode == EvalMode::pair ? predict(pass.logits, task.classes) : predict(pass.logits);
                truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
            }
            predicted.insert(predicted.end(), p.begin(), p.end());
        }
        m.per_task_accuracy.push_back(accuracy(predicted, truth));
    }
    m.average_accuracy = mean(m.per_task_accuracy);
    return m;
}

// ---- replay loop ------------------------------------------------------------

namespace {

// Per-sample gradient in factored form: the weight gradient of layer l is
// a_l^T d_l and the bias gradient d_l.
struct Sketch {
    std::vector<Vector> a;
    std::vector<Vector> d;
    double norm = 0.0;
};

double sketch_dot(const Sketch& x, const Sketch& y) {
    double s = 0.0;
    for (std::size_t l = 0; l < x.a.size(); ++l) s += (x.a[l].dot(y.a[l]) + 1.0) * x.d[l].dot(y.d[l]);
    return s;
}

double sketch_cosine(const Sketch& x, const Sketch& y) {
    if (x.norm == 0.0 || y.norm == 0.0) return 0.0;
    return std::clamp(sketch_dot(x, y) / (x.norm * y.norm), -1.0, 1.0);
}

std::vector<Sketch> sketch_batch(const MlpParams& params, const Batch& batch) {
    std::vector<Sketch> out(batch.size());
    if (batch.size() == 0) return out;
    const ForwardPass pass = forward(params, batch.inputs);
    const auto deltas = backprop_deltas(params, pass, cross_entropy_delta(pass.logits, batch.labels));
    const std::size_t layers = params.layout().num_layers();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Sketch& s = out[i];
        s.a.resize(layers);
        s.d.resize(layers);
        double sq = 0.0;
        for (std::size_t l = 0; l < layers; ++l) {
            s.a[l] = pass.activations[l].row(static_cast<Eigen::Index>(i)).transpose();
            s.d[l] = deltas[l].row(static_cast<Eigen::Index>(i)).transpose();
            sq += (s.a[l].squaredNorm() + 1.0) * s.d[l].squaredNorm();
        }
        s.norm = std::sqrt(sq);
    }
    return out;
}

Batch concat(const Batch& a, const Batch& b) {
    Batch out;
    out.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
    out.inputs.topRows(a.inputs.rows()) = a.inputs;
    out.inputs.bottomRows(b.inputs.rows()) = b.inputs;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

TimelineRow timeline_row(std::size_t batch, const ReplayBuffer& buffer, std::size_t pruned) {
    const BufferStats st = stats(buffer);
    TimelineRow row;
    row.batch = batch;
    row.effective_samples = st.effective_samples;
    row.used_units = st.used_units;
    row.budget_units = st.budget_units;
    row.pruned_features = pruned;
    row.per_task = st.per_task_counts;
    return row;
}

Metrics replay_loop(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed, bool schematic,
                    const ProgressFn& progress) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset& train = *stream.train;
    const std::size_t dim = train.dim();
    const bool domain = cfg.head == Head::domain;
    const Layout layout = make_layout(cfg, dim, domain ? domain_width(stream.tasks) : train.num_classes);
    std::vector<int> labels = stream.train_labels;
    if (domain)
        for (const TaskSpec& task : stream.tasks)
            for (std::size_t r : task.train) labels[r] = domain_label(task, labels[r]);

    MlpParams theta = init_params(layout, seed);
    AdamState adam = AdamState::zeros(layout);
    ReplayBuffer buffer = ReplayBuffer::for_nominal(dim, cfg.buffer, cfg.budget_mode);
    Rng rng(seed ^ kReplaySalt);
    const double alpha = schematic ? cfg.alpha : 0.0;
    const double beta = schematic ? cfg.beta : 0.0;
    ImportanceMap importance;
    if (beta > 0.0) importance = refresh_ncc_importance(theta, cfg.output_importance);

    Metrics m;
    m.method = method_name(schematic ? Method::smart : Method::gss, cfg.variant);
    m.config = cfg;
    m.seed = seed;
    m.min_post_projection_cosine = std::numeric_limits<double>::infinity();

    std::vector<std::pair<int, Batch>> stream_batches;
    for (const TaskSpec& task : stream.tasks)
        for (Batch& b : batches(task, train, cfg.batch_size, seed ^ (kBatchSalt * (task.id + 1)),
                                labels))
            stream_batches.emplace_back(task.id, std::move(b));

    std::unordered_map<std::uint64_t, Sketch> sketches;
    std::size_t pruned_now = 0;
    for (std::size_t t = 0; t < stream_batches.size(); ++t) {
        const auto& [task_id, current] = stream_batches[t];
        const MlpParams theta_prev = theta;
        const SnapshotParams anchor{theta};
        const FeatureMask mask = schematic ? derive_mask(theta.weight(0), cfg.epsilon) : FeatureMask::none(dim);
        const IndexSetPtr live = make_index_set(layout, mask);

        for (std::size_t it = 0; it < cfg.inner_iters; ++it) {
            Batch replay;
            if (!buffer.empty()) {
                const auto pos = sample_replay(buffer, std::min(cfg.replay_batch, buffer.size()), rng);
                replay = decode_batch(buffer, pos);
            }
            LossAndGradient lg;
            if (cfg.enforce == Enforcement::joint && replay.size() > 0) {
                lg = loss_and_gradient(theta, concat(current, replay));
            } else {
                lg = loss_and_gradient(theta, Batch{apply_input_mask(current.inputs, mask), current.labels});
                if (replay.size() > 0) {
                    const GradVec g_ref =
                        reference_gradient(replay, cfg.ref_at == RefAt::prev ? theta_prev : theta, mask, live);
                    const GradVec g_cur = restrict(lg.grad, live);
                    if (violation(g_cur, g_ref) < 0.0) {
                        const Projection proj = project(g_cur, g_ref);
                        if (!proj.zero_reference) {
                            const double denom = proj.grad.values().norm() * g_ref.values().norm();
                            const double cos = denom > 0.0 ? violation(proj.grad, g_ref) / denom : 0.0;
                            m.min_post_projection_cosine = std::min(m.min_post_projection_cosine, cos);
                            if (cos < -1e-9)
                                throw std::logic_error("projected gradient still violates the replay constraint");
                            ++m.projections;
                        }
                        scatter(proj.grad, lg.grad);
                    }
                }
            }
            if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
                m.diverged = true;
                m.diagnostic = "non-finite loss at batch " + std::to_string(t) + " iteration " + std::to_string(it);
                break;
            }
            if (alpha > 0.0) lg.grad.weight(0) += alpha * group_lasso(theta.weight(0)).subgradient;
            if (beta > 0.0) lg.grad.flat() += beta * consolidation_penalty(theta, anchor, importance).grad.flat();
            adam_step(theta, lg.grad, adam, cfg.lr);
        }
        if (m.diverged) break;

        const FeatureMask stored_mask =
            schematic ? derive_mask(theta.weight(0), cfg.epsilon) : FeatureMask::none(dim);
        pruned_now = stored_mask.pruned_count();
        const std::uint32_t mask_id = buffer.register_mask(stored_mask);

        std::vector<SparseSample> candidates;
        Batch cand_batch;
        cand_batch.inputs.resize(static_cast<Eigen::Index>(current.size()), static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < current.size(); ++i) {
            const auto row = current.inputs.row(static_cast<Eigen::Index>(i));
            SparseSample s = encode(std::span<const double>(row.data(), dim), current.labels[i], stored_mask, mask_id);
            s.task = task_id;
            cand_batch.inputs.row(static_cast<Eigen::Index>(i)) = decode(s, dim).transpose();
            cand_batch.labels.push_back(s.label);
            candidates.push_back(std::move(s));
        }
        const auto cand_sketch = sketch_batch(theta, cand_batch);
        sketches.clear();
        {
            std::vector<std::size_t> all(buffer.size());
            std::iota(all.begin(), all.end(), 0);
            const auto stored = sketch_batch(theta, decode_batch(buffer, all));
            for (std::size_t i = 0; i < all.size(); ++i) sketches[buffer.entries()[i].uid] = stored[i];
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            std::vector<double> cosines;
            for (std::size_t pos : draw_comparisons(buffer, cfg.gss_comparisons, rng))
                cosines.push_back(sketch_cosine(cand_sketch[i], sketches.at(buffer.entries()[pos].uid)));
            const double score = gss_score(cosines);
            const Admission adm = gss_greedy_admit(buffer, std::move(candidates[i]), score, rng);
            for (std::uint64_t uid : adm.evicted) sketches.erase(uid);
            if (adm.accepted) sketches[buffer.entries().back().uid] = cand_sketch[i];
        }
        if (buffer.used_units() > buffer.budget_units()) throw std::logic_error("replay buffer over budget");
        m.timeline.push_back(timeline_row(t, buffer, pruned_now));

        if (beta > 0.0 && (t + 1) % cfg.refresh_every == 0)
            importance = refresh_ncc_importance(theta, cfg.output_importance);

        if (progress && (t + 1) % 20 == 0) {
            std::ostringstream os;
            os << m.method << " seed=" << seed << " batch " << t + 1 << "/" << stream_batches.size()
               << " buffer=" << buffer.size() << " pruned=" << pruned_now;
            progress(os.str());
        }
    }

    const EvalMode alt = cfg.eval == EvalMode::pair ? EvalMode::multiclass : EvalMode::pair;
    const Metrics primary = evaluate(theta, stream.tasks, *stream.test, cfg.eval, cfg.head);
    const Metrics secondary = evaluate(theta, stream.tasks, *stream.test, alt, cfg.head);
    m.per_task_accuracy = primary.per_task_accuracy;
    m.average_accuracy = primary.average_accuracy;
    m.per_task_alt = secondary.per_task_accuracy;
    m.average_alt = secondary.average_accuracy;
    m.effective_samples_final = buffer.size();
    m.used_units_final = buffer.used_units();
    if (m.projections == 0) m.min_post_projection_cosine = 0.0;
    m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

}  // namespace

Metrics run_smart(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed, const ProgressFn& progress) {
    return replay_loop(cfg, stream, seed, true, progress);
}

Metrics run_gss_greedy_baseline(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed,
                                const ProgressFn& progress) {
    return replay_loop(cfg, stream, seed, false, progress);
}

// ---- regulariser-only protocol ---------------------------------------------

Metrics run_ablation(const RunConfig& cfg, const TaskStream& stream, std::uint64_t seed, const ProgressFn& progress) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset& train = *stream.train;
    const Head head = cfg.ablation_head;
    const std::size_t outputs = head == Head::domain ? domain_width(stream.tasks) : train.num_classes;
    const Layout layout = make_layout(cfg, train.dim(), outputs);
    const RegVariant variant = cfg.variant;
    const double strength = cfg.reg_strength.value_or(default_reg_strength(variant));

    MlpParams theta = init_params(layout, seed);
    AdamState adam = AdamState::zeros(layout);
    SiAccumulator si(layout);
    ImportanceMap importance(layout);
    SnapshotParams anchor{theta};
    bool anchored = false;

    Metrics m;
    m.method = method_name(Method::ablation, variant);
    m.config = cfg;
    m.seed = seed;

    for (const TaskSpec& task : stream.tasks) {
        std::vector<int> labels = stream.train_labels;
        if (head == Head::domain)
            for (std::size_t r : task.train) labels[r] = domain_label(task, labels[r]);
        if (variant == RegVariant::si) si.begin_task(theta);
        for (std::size_t epoch = 0; epoch < cfg.ablation_epochs; ++epoch) {
            const std::uint64_t bseed = seed ^ (kBatchSalt * (task.id + 1)) ^ (epoch * kReplaySalt);
            for (const Batch& batch : batches(task, train, cfg.ablation_batch, bseed, labels)) {
                LossAndGradient lg = loss_and_gradient(theta, batch);
                if (!std::isfinite(lg.loss)) {
                    m.diverged = true;
                    m.diagnostic = "non-finite loss in task " + std::to_string(task.id);
                    break;
                }
                Gradients total = lg.grad;
                if (anchored && strength > 0.0 && variant != RegVariant::none)
                    total.flat() += strength * consolidation_penalty(theta, anchor, importance).grad.flat();
                if (variant == RegVariant::si) {
                    const MlpParams before = theta;
                    adam_step(theta, total, adam, cfg.ablation_lr);
                    si.record_step(lg.grad, before, theta);
                } else {
                    adam_step(theta, total, adam, cfg.ablation_lr);
                }
            }
            if (m.diverged) break;
        }
        if (m.diverged) break;

        if (variant != RegVariant::none) {
            if (variant == RegVariant::si) si.end_task(theta);
            if (variant == RegVariant::ewc || variant == RegVariant::mas) {
                const Batch data = gather(train, task.train, labels);
                const ImportanceMap fresh = baseline_importance(variant, theta, &data);
                importance.flat() += fresh.flat();
            } else {
                importance = baseline_importance(variant, theta, nullptr, &si);
            }
            anchor = SnapshotParams{theta};
            anchored = true;
        }
        if (progress) progress(m.method + " seed=" + std::to_string(seed) + " finished task " + std::to_string(task.id));
    }

    const Metrics eval = evaluate(theta, stream.tasks, *stream.test, cfg.eval, head);
    m.per_task_accuracy = eval.per_task_accuracy;
    m.average_accuracy = eval.average_accuracy;
    m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return m;
}

Metrics run_one(const RunConfig& cfg, std::uint64_t seed, const ProgressFn& progress) {
    const TaskStream stream = make_stream(cfg, seed);
    switch (cfg.method) {
        case Method::smart: return run_smart(cfg, stream, seed, progress);
        case Method::gss: return run_gss_greedy_baseline(cfg, stream, seed, progress);
        case Method::ablation: return run_ablation(cfg, stream, seed, progress);
    }
    throw std::invalid_argument("unknown method");
}

std::vector<Metrics> run_all(const std::vector<RunConfig>& configs, std::size_t threads, const ProgressFn& progress) {
    std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        configs[c].validate();
        for (std::uint64_t s : configs[c].seeds) jobs.emplace_back(c, s);
    }
    std::vector<Metrics> results(jobs.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(1, jobs.size()));

    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    std::exception_ptr failure;
    ProgressFn locked;
    if (progress)
        locked = [&](const std::string& line) {
            std::lock_guard lock(log_mu);
            progress(line);
        };
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                results[j] = run_one(configs[jobs[j].first], jobs[j].second, locked);
                if (locked) {
                    std::ostringstream os;
                    os << "done " << configs[jobs[j].first].label() << " seed=" << jobs[j].second
                       << " acc=" << results[j].average_accuracy << " wall=" << results[j].wall_s << "s";
                    locked(os.str());
                }
            } catch (...) {
                std::lock_guard lock(log_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

std::vector<SweepRow> sensitivity_sweep(const RunConfig& cfg, const std::vector<double>& alphas,
                                        const std::vector<double>& betas, const ProgressFn& progress) {
    if (alphas.empty() && betas.empty()) throw std::invalid_argument("sensitivity sweep needs a nonempty grid");
    std::vector<RunConfig> configs;
    std::vector<SweepRow> rows;
    for (double a : alphas) {
        RunConfig c = cfg;
        c.alpha = a;
        configs.push_back(c);
        rows.push_back(SweepRow{"alpha", a, cfg.corrupt, 0.0, 0.0, {}});
    }
    for (double b : betas) {
        RunConfig c = cfg;
        c.beta = b;
        configs.push_back(c);
        rows.push_back(SweepRow{"beta", b, cfg.corrupt, 0.0, 0.0, {}});
    }
    const auto results = run_all(configs, cfg.threads, progress);
    std::size_t k = 0;
    for (auto& row : rows) {
        std::vector<double> accs;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++k) {
            accs.push_back(results[k].average_accuracy);
            row.runs.push_back(results[k]);
        }
        row.mean_accuracy = mean(accs);
        row.std_accuracy = stddev(accs);
    }
    return rows;
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace smart
