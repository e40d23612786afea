#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smart/nn.hpp"

namespace smart {

struct Dataset {
    Matrix inputs;            // N x D
    std::vector<int> labels;  // each < num_classes
    std::size_t num_classes = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct TaskSpec {
    int id = 0;
    std::vector<int> classes;
    std::vector<std::size_t> train;  // rows of the training dataset
    std::vector<std::size_t> test;   // rows of the evaluation dataset
};

// Pixels are scaled by 1/255. Throws std::runtime_error on bad magic,
// truncation or an image/label count mismatch.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct MnistSplits {
    Dataset train;
    Dataset test;
};

// Reads the four standard file names from `dir`.
MnistSplits load_mnist_dir(const std::filesystem::path& dir);

// Five tasks on the class pairs {0,1} ... {8,9}. Each task draws
// `per_class` training rows of each of its classes without replacement and
// evaluates on every test row of those classes.
std::vector<TaskSpec> make_disjoint_tasks(const Dataset& train, const Dataset& test,
                                          std::uint64_t seed, std::size_t per_class = 500);

struct CorruptionConfig {
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> class_universe;

    void validate() const;
};

// Exactly round(ratio * N) positions get a label drawn uniformly from the
// universe minus the original label.
std::vector<int> corrupt_labels(std::span<const int> labels, const CorruptionConfig& config);

struct CsvStream {
    Dataset data;
    std::vector<TaskSpec> tasks;  // in order of first appearance
};

// Header `task,label,f0,...,f{D-1}`. Tasks evaluate on their own rows.
CsvStream load_csv_stream(const std::filesystem::path& path);
void write_csv_stream(const std::filesystem::path& path, const Dataset& data,
                      std::span<const int> task_of_row);

// `labels`, when non-empty, replaces data.labels (one entry per row).
std::vector<Batch> batches(const TaskSpec& task, const Dataset& data, std::size_t batch_size,
                           std::uint64_t seed, std::span<const int> labels = {});

Batch gather(const Dataset& data, std::span<const std::size_t> rows, std::span<const int> labels = {});

}  // namespace smart
