#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "smart/harness.hpp"

namespace smart {

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

// JSON has no inf/nan; they become null.
nlohmann::json jnum(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(path, std::ios::out | mode);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::string config_key(const Metrics& m) {
    return m.method + "|" + num(static_cast<double>(m.config.buffer)) + "|" + num(m.config.corrupt) + "|" +
           num(m.config.alpha) + "|" + num(m.config.beta);
}

// "task:count" pairs separated by ';'.
std::string per_task_field(const TimelineRow& row) {
    std::string out;
    for (const auto& [task, count] : row.per_task) {
        if (!out.empty()) out += ';';
        out += std::to_string(task) + ':' + std::to_string(count);
    }
    return out;
}

std::size_t max_tasks(const std::vector<Metrics>& metrics) {
    std::size_t t = 0;
    for (const auto& m : metrics) t = std::max(t, m.per_task_accuracy.size());
    return t;
}

}  // namespace

std::string results_header(std::size_t num_tasks) {
    std::string h = "method,M,ratio,alpha,beta,seed,avg_acc";
    for (std::size_t t = 0; t < num_tasks; ++t) h += ",task" + std::to_string(t) + "_acc";
    h += ",effective_samples_final,used_units_final,eval,avg_acc_alt,diverged,wall_s";
    return h;
}

std::string results_row(const Metrics& m, std::size_t num_tasks) {
    std::ostringstream os;
    os << m.method << ',' << m.config.buffer << ',' << num(m.config.corrupt) << ',' << num(m.config.alpha) << ','
       << num(m.config.beta) << ',' << m.seed << ',' << num(m.average_accuracy);
    for (std::size_t t = 0; t < num_tasks; ++t)
        os << ',' << (t < m.per_task_accuracy.size() ? num(m.per_task_accuracy[t]) : "");
    os << ',' << m.effective_samples_final << ',' << m.used_units_final << ',' << to_string(m.config.eval) << ','
       << num(m.average_alt) << ',' << (m.diverged ? 1 : 0) << ',' << num(m.wall_s);
    return os.str();
}

void emit_results(const std::vector<Metrics>& metrics, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::size_t tasks = max_tasks(metrics);

    auto results = open_out(out_dir / "results.csv");
    results << results_header(tasks) << '\n';
    for (const auto& m : metrics) results << results_row(m, tasks) << '\n';

    auto timeline = open_out(out_dir / "buffer_timeline.csv");
    timeline << "method,M,ratio,alpha,beta,seed,batch,effective_samples,used_units,budget_units,pruned_features,per_task\n";
    for (const auto& m : metrics)
        for (const auto& row : m.timeline)
            timeline << m.method << ',' << m.config.buffer << ',' << num(m.config.corrupt) << ','
                     << num(m.config.alpha) << ',' << num(m.config.beta) << ',' << m.seed << ',' << row.batch << ','
                     << row.effective_samples << ',' << row.used_units << ',' << row.budget_units << ','
                     << row.pruned_features << ',' << per_task_field(row) << '\n';

    auto bounds = open_out(out_dir / "bounds.jsonl");
    for (const auto& m : metrics)
        for (const auto& b : m.bounds)
            bounds << nlohmann::json{{"method", m.method}, {"seed", m.seed}, {"lambda", jnum(b.lambda)},
                                     {"empirical_delta", jnum(b.empirical_delta)},
                                     {"first_order_sum", jnum(b.first_order_sum)},
                                     {"epsilon_bound", jnum(b.epsilon_bound)}, {"satisfied", b.satisfied},
                                     {"gap", jnum(b.gap)}, {"steps", b.steps}}
                          .dump()
                   << '\n';

    std::map<std::string, std::vector<const Metrics*>> groups;
    std::vector<std::string> order;
    for (const auto& m : metrics) {
        auto& g = groups[config_key(m)];
        if (g.empty()) order.push_back(config_key(m));
        g.push_back(&m);
    }
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& key : order) {
        const auto& g = groups[key];
        const Metrics& first = *g.front();
        std::vector<double> acc, alt, eff;
        for (const Metrics* m : g) {
            acc.push_back(m->average_accuracy);
            alt.push_back(m->average_alt);
            eff.push_back(static_cast<double>(m->effective_samples_final));
        }
        nlohmann::json per_task = nlohmann::json::array();
        for (std::size_t t = 0; t < first.per_task_accuracy.size(); ++t) {
            std::vector<double> xs;
            for (const Metrics* m : g)
                if (t < m->per_task_accuracy.size()) xs.push_back(m->per_task_accuracy[t]);
            per_task.push_back(mean(xs));
        }
        summary.push_back({{"method", first.method},
                           {"M", first.config.buffer},
                           {"ratio", first.config.corrupt},
                           {"alpha", first.config.alpha},
                           {"beta", first.config.beta},
                           {"eval", std::string(to_string(first.config.eval))},
                           {"n", g.size()},
                           {"avg_acc_mean", mean(acc)},
                           {"avg_acc_std", stddev(acc)},
                           {"avg_acc_alt_mean", mean(alt)},
                           {"avg_acc_alt_std", stddev(alt)},
                           {"effective_samples_mean", mean(eff)},
                           {"per_task_mean", per_task}});
    }
    auto out = open_out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
    if (!results || !timeline || !bounds || !out) throw std::runtime_error("failed writing results to " + out_dir.string());
}

void emit_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto out = open_out(out_dir / "sweep.csv");
    out << "parameter,value,ratio,mean_acc,std_acc,n\n";
    for (const auto& r : rows)
        out << r.parameter << ',' << num(r.value) << ',' << num(r.corrupt) << ',' << num(r.mean_accuracy) << ','
            << num(r.std_accuracy) << ',' << r.runs.size() << '\n';
    std::vector<Metrics> all;
    for (const auto& r : rows) all.insert(all.end(), r.runs.begin(), r.runs.end());
    emit_results(all, out_dir);
    if (!out) throw std::runtime_error("failed writing sweep to " + out_dir.string());
}

void emit_bounds(const std::vector<BoundReport>& reports, const std::string& kind,
                 const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto out = open_out(out_dir / "bounds.jsonl", std::ios::app);
    for (const auto& b : reports)
        out << nlohmann::json{{"kind", kind},
                              {"lambda", jnum(b.lambda)},
                              {"empirical_delta", jnum(b.empirical_delta)},
                              {"first_order_sum", jnum(b.first_order_sum)},
                              {"epsilon_bound", jnum(b.epsilon_bound)},
                              {"l1_bound", jnum(b.l1_bound)},
                              {"satisfied", b.satisfied},
                              {"skipped", b.skipped},
                              {"gap", jnum(b.gap)},
                              {"steps", b.steps}}
                   .dump()
            << '\n';
    if (!out) throw std::runtime_error("failed writing bounds to " + out_dir.string());
}

}  // namespace smart
