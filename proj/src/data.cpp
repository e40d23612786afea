#include "smart/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>

#include "smart/rng.hpp"

namespace smart {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t at) {
    return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) |
           (std::uint32_t{buf[at + 2]} << 8) | std::uint32_t{buf[at + 3]};
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_all(images);
    const auto lab = read_all(labels);
    if (img.size() < 16 || be32(img, 0) != 0x00000803)
        throw std::runtime_error(images.string() + ": not an IDX image file");
    if (lab.size() < 8 || be32(lab, 0) != 0x00000801)
        throw std::runtime_error(labels.string() + ": not an IDX label file");
    const std::size_t n = be32(img, 4);
    const std::size_t rows = be32(img, 8);
    const std::size_t cols = be32(img, 12);
    const std::size_t dim = rows * cols;
    if (be32(lab, 4) != n) throw std::runtime_error("image/label count mismatch");
    if (img.size() < 16 + n * dim) throw std::runtime_error(images.string() + ": truncated");
    if (lab.size() < 8 + n) throw std::runtime_error(labels.string() + ": truncated");

    Dataset ds;
    ds.num_classes = 10;
    ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    const unsigned char* px = img.data() + 16;
    for (std::size_t i = 0; i < n * dim; ++i) ds.inputs.data()[i] = px[i] / 255.0;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        if (ds.labels[i] >= 10) throw std::runtime_error(labels.string() + ": label out of range");
    }
    return ds;
}

MnistSplits load_mnist_dir(const std::filesystem::path& dir) {
    return {load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"),
            load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte")};
}

std::vector<TaskSpec> make_disjoint_tasks(const Dataset& train, const Dataset& test,
                                          std::uint64_t seed, std::size_t per_class) {
    if (train.num_classes != 10 || test.num_classes != 10)
        throw std::invalid_argument("disjoint tasks need a 10-class dataset");
    std::vector<std::vector<std::size_t>> by_class(10);
    for (std::size_t i = 0; i < train.size(); ++i) by_class[train.labels[i]].push_back(i);

    Rng rng(seed);
    std::vector<TaskSpec> tasks;
    for (int t = 0; t < 5; ++t) {
        TaskSpec task;
        task.id = t;
        task.classes = {2 * t, 2 * t + 1};
        for (int c : task.classes) {
            auto pool = by_class[c];
            if (pool.size() < per_class)
                throw std::runtime_error("class " + std::to_string(c) + " has too few samples");
            for (std::size_t i = 0; i < per_class; ++i) {
                const std::size_t j = i + uniform_index(rng, pool.size() - i);
                std::swap(pool[i], pool[j]);
            }
            task.train.insert(task.train.end(), pool.begin(), pool.begin() + per_class);
        }
        std::sort(task.train.begin(), task.train.end());
        for (std::size_t i = 0; i < test.size(); ++i)
            if (test.labels[i] == task.classes[0] || test.labels[i] == task.classes[1]) task.test.push_back(i);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

void CorruptionConfig::validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("corruption ratio must lie in [0, 1]");
    std::vector<int> u = class_universe;
    std::sort(u.begin(), u.end());
    if (std::unique(u.begin(), u.end()) - u.begin() < 2)
        throw std::invalid_argument("corruption needs at least two classes");
}

std::vector<int> corrupt_labels(std::span<const int> labels, const CorruptionConfig& config) {
    config.validate();
    std::vector<int> universe = config.class_universe;
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

    std::vector<int> out(labels.begin(), labels.end());
    const auto flips = static_cast<std::size_t>(std::llround(config.ratio * static_cast<double>(labels.size())));
    Rng rng(config.seed);
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<int> choices;
    for (std::size_t i = 0; i < flips; ++i) {
        const std::size_t j = i + uniform_index(rng, order.size() - i);
        std::swap(order[i], order[j]);
        const int original = labels[order[i]];
        choices.clear();
        for (int c : universe)
            if (c != original) choices.push_back(c);
        out[order[i]] = choices[uniform_index(rng, choices.size())];
    }
    return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

template <typename T>
T parse_cell(const std::string& cell, std::size_t line_no) {
    T value{};
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad value '" + cell + "'");
    return value;
}

}  // namespace

CsvStream load_csv_stream(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "task" || header[1] != "label")
        throw std::runtime_error(path.string() + ": header must be task,label,f0,...");
    const std::size_t dim = header.size() - 2;

    std::vector<double> values;
    std::vector<int> labels;
    std::map<std::string, std::size_t> task_index;
    std::vector<std::vector<std::size_t>> task_rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields");
        const int label = parse_cell<int>(cells[1], line_no);
        if (label < 0) throw std::runtime_error("line " + std::to_string(line_no) + ": negative label");
        for (std::size_t f = 0; f < dim; ++f) values.push_back(parse_cell<double>(cells[f + 2], line_no));
        auto [it, fresh] = task_index.emplace(cells[0], task_rows.size());
        if (fresh) task_rows.emplace_back();
        task_rows[it->second].push_back(labels.size());
        labels.push_back(label);
    }
    if (labels.empty()) throw std::runtime_error(path.string() + ": no data rows");

    CsvStream out;
    out.data.inputs = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                               static_cast<Eigen::Index>(dim));
    out.data.labels = labels;
    out.data.num_classes =
        std::max<std::size_t>(2, static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1);
    for (std::size_t t = 0; t < task_rows.size(); ++t) {
        TaskSpec task;
        task.id = static_cast<int>(t);
        for (std::size_t r : task_rows[t]) task.classes.push_back(labels[r]);
        std::sort(task.classes.begin(), task.classes.end());
        task.classes.erase(std::unique(task.classes.begin(), task.classes.end()), task.classes.end());
        task.train = task_rows[t];
        task.test = task_rows[t];
        out.tasks.push_back(std::move(task));
    }
    return out;
}

void write_csv_stream(const std::filesystem::path& path, const Dataset& data,
                      std::span<const int> task_of_row) {
    if (task_of_row.size() != data.size()) throw std::invalid_argument("write_csv_stream: one task id per row");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "task,label";
    for (std::size_t f = 0; f < data.dim(); ++f) out << ",f" << f;
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        out << task_of_row[r] << ',' << data.labels[r];
        for (std::size_t f = 0; f < data.dim(); ++f) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof(buf),
                                           data.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)));
            out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Batch gather(const Dataset& data, std::span<const std::size_t> rows, std::span<const int> labels) {
    if (labels.empty()) labels = data.labels;
    if (labels.size() != data.size()) throw std::invalid_argument("gather: one label per row required");
    Batch batch;
    batch.inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
    batch.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        batch.inputs.row(static_cast<Eigen::Index>(i)) = data.inputs.row(static_cast<Eigen::Index>(rows[i]));
        batch.labels.push_back(labels[rows[i]]);
    }
    return batch;
}

std::vector<Batch> batches(const TaskSpec& task, const Dataset& data, std::size_t batch_size,
                           std::uint64_t seed, std::span<const int> labels) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    std::vector<std::size_t> order = task.train;
    Rng rng(seed);
    shuffle(order, rng);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        out.push_back(gather(data, std::span<const std::size_t>(order).subspan(start, len), labels));
    }
    return out;
}

}  // namespace smart
