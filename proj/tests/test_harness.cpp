#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "smart/harness.hpp"
#include "smart/rng.hpp"

using namespace smart;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "smart_test_harness";
    fs::create_directories(dir);
    return dir / name;
}

// Binary tasks where feature 0 separates the classes and feature 1 is
// uniform noise.
fs::path noise_stream(std::size_t tasks, std::size_t rows_per_task, std::uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    d.num_classes = 2;
    d.inputs.resize(static_cast<Eigen::Index>(tasks * rows_per_task), 2);
    std::vector<int> task_of;
    for (std::size_t i = 0; i < tasks * rows_per_task; ++i) {
        const int y = static_cast<int>(uniform_index(rng, 2));
        d.labels.push_back(y);
        d.inputs(static_cast<Eigen::Index>(i), 0) = y ? 0.6 + 0.4 * uniform01(rng) : 0.4 * uniform01(rng);
        d.inputs(static_cast<Eigen::Index>(i), 1) = uniform01(rng);
        task_of.push_back(static_cast<int>(i / rows_per_task));
    }
    const fs::path path = scratch("noise_" + std::to_string(tasks) + "_" + std::to_string(rows_per_task) + ".csv");
    write_csv_stream(path, d, task_of);
    return path;
}

RunConfig small_config(const fs::path& csv) {
    RunConfig cfg;
    cfg.dataset = "csv:" + csv.string();
    cfg.hidden = {16, 16};
    cfg.buffer = 20;
    cfg.head = Head::shared;
    cfg.inner_iters = 20;
    cfg.seeds = {0};
    return cfg;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string cell; std::getline(in, cell, sep);) out.push_back(cell);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

// One-input network that predicts class 1 exactly when x > 0.
MlpParams threshold_net() {
    MlpParams p(Layout({1, 2}));
    p.weight(0) << -10.0, 10.0;
    return p;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("evaluate averages per-task accuracy") {
    Dataset test;
    test.num_classes = 2;
    test.inputs.resize(20, 1);
    for (int i = 0; i < 20; ++i) {
        test.labels.push_back(i % 2);
        test.inputs(i, 0) = i % 2 ? 1.0 : -1.0;
    }
    // One wrong answer in task 0, two in task 1.
    test.inputs(0, 0) = 1.0;
    test.inputs(10, 0) = 1.0;
    test.inputs(12, 0) = 1.0;
    std::vector<TaskSpec> tasks(2);
    for (int t = 0; t < 2; ++t) {
        tasks[t].id = t;
        tasks[t].classes = {0, 1};
        for (std::size_t i = 0; i < 10; ++i) tasks[t].test.push_back(10 * static_cast<std::size_t>(t) + i);
    }
    const Metrics m = evaluate(threshold_net(), tasks, test, EvalMode::pair);
    CHECK(m.per_task_accuracy[0] == doctest::Approx(0.9));
    CHECK(m.per_task_accuracy[1] == doctest::Approx(0.8));
    CHECK(m.average_accuracy == doctest::Approx(0.85));

    test.inputs(0, 0) = -1.0;
    test.inputs(10, 0) = -1.0;
    test.inputs(12, 0) = -1.0;
    CHECK(evaluate(threshold_net(), tasks, test, EvalMode::pair).average_accuracy == 1.0);
    CHECK(evaluate(threshold_net(), tasks, test, EvalMode::pair, Head::domain).average_accuracy == 1.0);
}

TEST_CASE("untrained network is at chance on balanced pairs") {
    Rng rng(4);
    Dataset test;
    test.num_classes = 10;
    test.inputs.resize(10000, 20);
    for (Eigen::Index i = 0; i < test.inputs.size(); ++i) test.inputs.data()[i] = uniform01(rng);
    for (int i = 0; i < 10000; ++i) test.labels.push_back(i % 10);
    std::vector<TaskSpec> tasks(5);
    for (int t = 0; t < 5; ++t) {
        tasks[t].id = t;
        tasks[t].classes = {2 * t, 2 * t + 1};
        for (std::size_t i = 0; i < 10000; ++i)
            if (test.labels[i] / 2 == t) tasks[t].test.push_back(i);
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Metrics shared = evaluate(init_params(Layout({20, 32, 32, 10}), seed), tasks, test, EvalMode::pair);
        CHECK(std::abs(shared.average_accuracy - 0.5) <= 0.05);
        const Metrics domain = evaluate(init_params(Layout({20, 32, 32, 2}), seed), tasks, test, EvalMode::pair,
                                        Head::domain);
        CHECK(std::abs(domain.average_accuracy - 0.5) <= 0.05);
    }
}

TEST_CASE("config validation") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.dataset = "imagenet";
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.corrupt = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(parse_method("gss") == Method::gss);
    CHECK(method_name(Method::ablation, RegVariant::ewc) == "ablation:ewc");
    CHECK_THROWS(parse_enforcement("sometimes"));
}

TEST_CASE("plain optimisation learns a single task") {
    RunConfig cfg = small_config(noise_stream(1, 300, 1));
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.buffer = 1;
    cfg.lr = 1e-3;
    const TaskStream stream = make_stream(cfg, 0);
    const double before =
        evaluate(init_params(Layout({2, 16, 16, 2}), 0), stream.tasks, *stream.test, EvalMode::pair, Head::shared)
            .average_accuracy;
    const Metrics m = run_smart(cfg, stream, 0);
    CHECK_FALSE(m.diverged);
    CHECK(m.average_accuracy > 0.95);
    CHECK(m.average_accuracy > before);
}

TEST_CASE("the noise feature is pruned and the signal feature kept") {
    RunConfig cfg = small_config(noise_stream(2, 3000, 7));
    cfg.alpha = 0.05;
    cfg.beta = 0.0;
    cfg.enforce = Enforcement::project;
    cfg.inner_iters = 100;
    const Metrics m = run_one(cfg, 0);
    REQUIRE_FALSE(m.timeline.empty());
    const std::size_t n = m.timeline.size();
    for (std::size_t i = 3 * n / 4; i < n; ++i) CHECK(m.timeline[i].pruned_features == 1);
    CHECK(m.average_accuracy > 0.95);
}

TEST_CASE("replay runs keep the budget and the projection contract") {
    RunConfig cfg = small_config(noise_stream(3, 200, 2));
    cfg.buffer = 10;
    for (Enforcement e : {Enforcement::project, Enforcement::joint})
        for (Method method : {Method::smart, Method::gss}) {
            cfg.enforce = e;
            cfg.method = method;
            const Metrics m = run_one(cfg, 3);
            CHECK_FALSE(m.diverged);
            for (const auto& row : m.timeline) CHECK(row.used_units <= row.budget_units);
            if (method == Method::gss) CHECK(m.effective_samples_final <= 10);
            if (e == Enforcement::project && m.projections > 0) CHECK(m.min_post_projection_cosine >= -1e-9);
        }
}

TEST_CASE("ablation runs every regulariser") {
    RunConfig cfg = small_config(noise_stream(3, 200, 3));
    cfg.method = Method::ablation;
    cfg.ablation_epochs = 1;
    for (RegVariant v : {RegVariant::none, RegVariant::ncc, RegVariant::l2, RegVariant::ewc, RegVariant::si,
                         RegVariant::mas}) {
        cfg.variant = v;
        const Metrics m = run_one(cfg, 0);
        CHECK_FALSE(m.diverged);
        CHECK(m.per_task_accuracy.size() == 3);
        CHECK(m.method == method_name(Method::ablation, v));
    }
}

TEST_CASE("divergence is reported instead of thrown") {
    RunConfig cfg = small_config(noise_stream(1, 100, 4));
    cfg.lr = 1e300;
    const Metrics m = run_one(cfg, 0);
    CHECK(m.diverged);
    CHECK_FALSE(m.diagnostic.empty());
}

TEST_CASE("same seed and config give the same results row") {
    RunConfig cfg = small_config(noise_stream(2, 200, 5));
    cfg.corrupt = 0.3;
    const auto strip = [](const Metrics& m) {
        const std::string row = results_row(m, 2);
        return row.substr(0, row.rfind(','));
    };
    const Metrics a = run_one(cfg, 11), b = run_one(cfg, 11), c = run_one(cfg, 12);
    CHECK(strip(a) == strip(b));
    CHECK(a.timeline.size() == b.timeline.size());
    CHECK(strip(a) != strip(c));
}

TEST_CASE("emitting results") {
    const fs::path empty_dir = scratch("empty_out");
    fs::remove_all(empty_dir);
    emit_results({}, empty_dir);
    const auto lines = read_lines(empty_dir / "results.csv");
    REQUIRE(lines.size() == 1);
    CHECK(lines[0] == results_header(0));

    std::vector<Metrics> runs;
    Rng rng(8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Metrics m;
        m.method = "smart";
        m.seed = seed;
        m.per_task_accuracy = {uniform01(rng), uniform01(rng)};
        m.average_accuracy = mean(m.per_task_accuracy);
        m.effective_samples_final = 300 + seed;
        m.timeline.push_back(TimelineRow{0, 1, 784, 784 * 300, 0, {{0, 1}}});
        runs.push_back(m);
    }
    const fs::path dir = scratch("ten_out");
    fs::remove_all(dir);
    emit_results(runs, dir);

    const auto rows = read_lines(dir / "results.csv");
    REQUIRE(rows.size() == 11);
    const auto header = split(rows[0], ',');
    std::size_t acc_col = 0;
    while (header[acc_col] != "avg_acc") ++acc_col;
    std::vector<double> acc;
    for (std::size_t r = 1; r < rows.size(); ++r) acc.push_back(std::stod(split(rows[r], ',')[acc_col]));
    double mu = 0.0;
    for (double v : acc) mu += v;
    mu /= 10.0;
    double ss = 0.0;
    for (double v : acc) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / 9.0);

    std::ifstream summary_file(dir / "summary.json");
    std::stringstream summary;
    summary << summary_file.rdbuf();
    const std::string text = summary.str();
    auto field = [&](const std::string& key) {
        const auto pos = text.find("\"" + key + "\":");
        REQUIRE(pos != std::string::npos);
        return std::stod(text.substr(pos + key.size() + 3));
    };
    CHECK(field("n") == 10.0);
    CHECK(field("avg_acc_mean") == doctest::Approx(mu).epsilon(1e-12));
    CHECK(field("avg_acc_std") == doctest::Approx(sd).epsilon(1e-12));
    CHECK(read_lines(dir / "buffer_timeline.csv").size() == 11);
    CHECK(fs::exists(dir / "bounds.jsonl"));
}

TEST_CASE("sweep emits one row per grid value") {
    RunConfig cfg = small_config(noise_stream(2, 100, 6));
    cfg.inner_iters = 5;
    const auto rows = sensitivity_sweep(cfg, {0.001}, {});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].parameter == "alpha");
    CHECK(rows[0].runs.size() == 1);
    const fs::path dir = scratch("sweep_out");
    emit_sweep(rows, dir);
    CHECK(read_lines(dir / "sweep.csv").size() == 2);
}

TEST_CASE("run_all keeps input order") {
    RunConfig cfg = small_config(noise_stream(1, 100, 9));
    cfg.inner_iters = 5;
    cfg.seeds = {3, 1, 2};
    RunConfig other = cfg;
    other.alpha = 0.01;
    const auto all = run_all({cfg, other}, 2);
    REQUIRE(all.size() == 6);
    CHECK(all[0].seed == 3);
    CHECK(all[2].seed == 2);
    CHECK(all[3].config.alpha == 0.01);
}

TEST_CASE("statistics helpers") {
    CHECK(mean({1.0, 2.0, 6.0}) == 3.0);
    CHECK(stddev({5.0}) == 0.0);
    CHECK(stddev({1.0, 3.0}) == doctest::Approx(std::sqrt(2.0)));
}

#ifdef SMART_CLI
TEST_CASE("command-line exit codes") {
    const std::string cli = SMART_CLI;
    const fs::path csv = noise_stream(1, 100, 10);
    const fs::path out = scratch("cli_out");
    auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " > " + scratch("cli.log").string() + " 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    const std::string base = "run --dataset csv:" + csv.string() + " --hidden 8 --inner-iters 5 --seeds 0 --out " + out.string();
    CHECK(run(base) == 0);
    CHECK(fs::exists(out / "results.csv"));
    CHECK(run(base + " --alpha -3") == 1);
    CHECK(run(base + " --dataset csv:/nonexistent.csv") == 1);
    CHECK(run(base + " --lr 1e300") == 2);

    const fs::path config = scratch("cli.cfg");
    std::ofstream(config) << "# comment\nalpha = 0.002\ninner_iters=3\n";
    CHECK(run(base + " --config " + config.string()) == 0);
    const auto row = split(read_lines(out / "results.csv").at(1), ',');
    CHECK(row[3] == "0.002");
    CHECK(run(base + " --config " + config.string() + " --alpha 0.004") == 0);
    CHECK(split(read_lines(out / "results.csv").at(1), ',')[3] == "0.004");

    CHECK(run("verify-bounds --seed 1 --nets 2 --pairs 50 --out " + (out / "bounds").string()) == 0);
    CHECK(fs::exists(out / "bounds" / "bounds.jsonl"));
}
#endif

}
