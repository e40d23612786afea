#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smart/harness.hpp"
#include "smart/verification.hpp"

using namespace smart;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x < 0 || x != std::floor(x)) throw ConfigError("'" + key + "' expects a non-negative integer");
    return static_cast<std::size_t>(x);
}

std::vector<double> to_grid(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split(v, ',')) out.push_back(to_double(key, s));
    if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list");
    return out;
}

// "0..9", "3", or "1,4,7".
std::vector<std::uint64_t> to_seeds(const std::string& v) {
    std::vector<std::uint64_t> out;
    for (const auto& part : split(v, ',')) {
        const auto dots = part.find("..");
        if (dots == std::string::npos) {
            out.push_back(to_size("seeds", part));
        } else {
            const auto lo = to_size("seeds", part.substr(0, dots));
            const auto hi = to_size("seeds", part.substr(dots + 2));
            if (hi < lo) throw ConfigError("seed range is empty: " + part);
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        }
    }
    if (out.empty()) throw ConfigError("no seeds given");
    return out;
}

template <typename F>
auto wrap(const std::string& key, F&& parse) {
    try {
        return parse();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("'" + key + "': " + e.what());
    }
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
        {"mnist-dir", [](RunConfig& c, const std::string& v) { c.mnist_dir = v; }},
        {"method",
         [](RunConfig& c, const std::string& v) {
             wrap("method", [&] {
                 if (v.rfind("ablation:", 0) == 0) {
                     c.method = Method::ablation;
                     c.variant = parse_reg_variant(v.substr(9));
                 } else {
                     c.method = parse_method(v);
                 }
                 return 0;
             });
         }},
        {"buffer", [](RunConfig& c, const std::string& v) { c.buffer = to_size("buffer", v); }},
        {"budget-mode",
         [](RunConfig& c, const std::string& v) { c.budget_mode = wrap("budget-mode", [&] { return parse_budget_mode(v); }); }},
        {"alpha", [](RunConfig& c, const std::string& v) { c.alpha = to_double("alpha", v); }},
        {"beta", [](RunConfig& c, const std::string& v) { c.beta = to_double("beta", v); }},
        {"epsilon", [](RunConfig& c, const std::string& v) { c.epsilon = to_double("epsilon", v); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.lr = to_double("lr", v); }},
        {"batch-size", [](RunConfig& c, const std::string& v) { c.batch_size = to_size("batch-size", v); }},
        {"inner-iters", [](RunConfig& c, const std::string& v) { c.inner_iters = to_size("inner-iters", v); }},
        {"replay-batch", [](RunConfig& c, const std::string& v) { c.replay_batch = to_size("replay-batch", v); }},
        {"gss-comparisons",
         [](RunConfig& c, const std::string& v) { c.gss_comparisons = to_size("gss-comparisons", v); }},
        {"per-class", [](RunConfig& c, const std::string& v) { c.per_class = to_size("per-class", v); }},
        {"hidden",
         [](RunConfig& c, const std::string& v) {
             c.hidden.clear();
             for (const auto& h : split(v, ',')) c.hidden.push_back(to_size("hidden", h));
         }},
        {"enforce", [](RunConfig& c, const std::string& v) { c.enforce = wrap("enforce", [&] { return parse_enforcement(v); }); }},
        {"ref-at", [](RunConfig& c, const std::string& v) { c.ref_at = wrap("ref-at", [&] { return parse_ref_at(v); }); }},
        {"eval", [](RunConfig& c, const std::string& v) { c.eval = wrap("eval", [&] { return parse_eval_mode(v); }); }},
        {"corrupt", [](RunConfig& c, const std::string& v) { c.corrupt = to_double("corrupt", v); }},
        {"corrupt-scope",
         [](RunConfig& c, const std::string& v) {
             c.corrupt_scope = wrap("corrupt-scope", [&] { return parse_corrupt_scope(v); });
         }},
        {"head", [](RunConfig& c, const std::string& v) { c.head = wrap("head", [&] { return parse_head(v); }); }},
        {"refresh-every", [](RunConfig& c, const std::string& v) { c.refresh_every = to_size("refresh-every", v); }},
        {"output-importance",
         [](RunConfig& c, const std::string& v) {
             if (v == "transpose") c.output_importance = OutputImportance::transpose;
             else if (v == "uniform") c.output_importance = OutputImportance::uniform;
             else throw ConfigError("'output-importance' must be transpose or uniform");
         }},
        {"ablation-epochs",
         [](RunConfig& c, const std::string& v) { c.ablation_epochs = to_size("ablation-epochs", v); }},
        {"ablation-batch", [](RunConfig& c, const std::string& v) { c.ablation_batch = to_size("ablation-batch", v); }},
        {"ablation-lr", [](RunConfig& c, const std::string& v) { c.ablation_lr = to_double("ablation-lr", v); }},
        {"ablation-head",
         [](RunConfig& c, const std::string& v) { c.ablation_head = wrap("ablation-head", [&] { return parse_head(v); }); }},
        {"ablation-full-tasks",
         [](RunConfig& c, const std::string& v) {
             if (v == "1" || v == "true") c.ablation_full_tasks = true;
             else if (v == "0" || v == "false") c.ablation_full_tasks = false;
             else throw ConfigError("'ablation-full-tasks' must be true or false");
         }},
        {"reg-strength", [](RunConfig& c, const std::string& v) { c.reg_strength = to_double("reg-strength", v); }},
        {"seeds", [](RunConfig& c, const std::string& v) { c.seeds = to_seeds(v); }},
        {"threads", [](RunConfig& c, const std::string& v) { c.threads = to_size("threads", v); }},
        {"out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
    };
    return table;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

// Registers every config key as a string flag; flags given on the command
// line win over the config file.
struct ConfigFlags {
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config_file;

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "key=value file; command-line flags take precedence");
        for (const auto& [key, setter] : setters()) options[key] = app.add_option("--" + key, values[key]);
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (const char* dir = std::getenv("SMART_MNIST_DIR")) cfg.mnist_dir = dir;
        if (!config_file.empty()) {
            for (const auto& [key, value] : read_config_file(config_file)) {
                const auto it = setters().find(key);
                if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
                it->second(cfg, value);
            }
        }
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) setters().at(key)(cfg, values.at(key));
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        return cfg;
    }
};

void log_line(const std::string& line) { std::cerr << line << std::endl; }

int report_runs(const std::vector<Metrics>& runs) {
    bool diverged = false;
    for (const auto& m : runs) {
        if (m.diverged) {
            diverged = true;
            std::cerr << "diverged: " << m.method << " seed=" << m.seed << ": " << m.diagnostic << '\n';
        }
    }
    std::map<std::string, std::vector<double>> by_label;
    std::vector<std::string> order;
    for (const auto& m : runs) {
        const auto label = m.config.label();
        if (!by_label.count(label)) order.push_back(label);
        by_label[label].push_back(m.average_accuracy);
    }
    for (const auto& label : order) {
        const auto& xs = by_label[label];
        std::printf("%s: %.2f +- %.2f over %zu seeds\n", label.c_str(), 100 * mean(xs), 100 * stddev(xs), xs.size());
    }
    return diverged ? 2 : 0;
}

int cmd_run(const ConfigFlags& flags) {
    const RunConfig cfg = flags.resolve();
    const auto runs = run_all({cfg}, cfg.threads, log_line);
    emit_results(runs, cfg.out_dir);
    return report_runs(runs);
}

int cmd_sweep(const ConfigFlags& flags, const std::string& alpha_grid, const std::string& beta_grid) {
    const RunConfig cfg = flags.resolve();
    const auto alphas = alpha_grid.empty() ? std::vector<double>{} : to_grid("alpha-grid", alpha_grid);
    const auto betas = beta_grid.empty() ? std::vector<double>{} : to_grid("beta-grid", beta_grid);
    if (alphas.empty() && betas.empty()) throw ConfigError("sweep needs --alpha-grid and/or --beta-grid");
    const auto rows = sensitivity_sweep(cfg, alphas, betas, log_line);
    emit_sweep(rows, cfg.out_dir);
    std::vector<Metrics> all;
    for (const auto& r : rows) {
        std::printf("%s=%g ratio=%g: %.2f +- %.2f\n", r.parameter.c_str(), r.value, r.corrupt, 100 * r.mean_accuracy,
                    100 * r.std_accuracy);
        all.insert(all.end(), r.runs.begin(), r.runs.end());
    }
    for (const auto& m : all)
        if (m.diverged) return 2;
    return 0;
}

int cmd_verify(std::uint64_t seed, const std::string& out, std::size_t nets, std::size_t pairs) {
    std::filesystem::create_directories(out);
    std::filesystem::remove(std::filesystem::path(out) / "bounds.jsonl");
    const FirstOrderSuite fo = first_order_suite(seed, nets);
    for (const auto& net : fo.nets) emit_bounds(net.reports, "first_order", out);
    std::printf("first-order: %zu nets, min fitted exponent %.3f, bound violations %zu\n", fo.nets.size(),
                fo.min_exponent, fo.bound_violations);
    const HolderSuite hs = holder_suite(seed, pairs);
    emit_bounds(hs.reports, "holder", out);
    std::printf("holder: %zu pairs, %zu skipped, %zu violations (worst lhs/bound %.3f), l1-corrected violations %zu\n",
                hs.trials, hs.skipped, hs.violations, hs.worst_excess, hs.l1_violations);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse schematic-memory continual learning experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "train and evaluate one configuration over its seeds");
    ConfigFlags run_flags;
    run_flags.attach(*run);

    auto* sweep = app.add_subcommand("sweep", "alpha/beta sensitivity grid");
    ConfigFlags sweep_flags;
    sweep_flags.attach(*sweep);
    std::string alpha_grid, beta_grid;
    sweep->add_option("--alpha-grid", alpha_grid, "comma-separated alpha values");
    sweep->add_option("--beta-grid", beta_grid, "comma-separated beta values");

    auto* verify = app.add_subcommand("verify-bounds", "numeric checks of the replay-loss bounds");
    std::uint64_t seed = 0;
    std::string verify_out = "results";
    std::size_t nets = 20, pairs = 10000;
    verify->add_option("--seed", seed);
    verify->add_option("--out", verify_out);
    verify->add_option("--nets", nets);
    verify->add_option("--pairs", pairs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(run_flags);
        if (*sweep) return cmd_sweep(sweep_flags, alpha_grid, beta_grid);
        if (*verify) return cmd_verify(seed, verify_out, nets, pairs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
