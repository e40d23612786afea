#include "smart/memory.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace smart {

FeatureMask derive_mask(const Eigen::Ref<const Matrix>& first_layer, double epsilon) {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("derive_mask: epsilon must be >= 0");
    FeatureMask mask;
    mask.dim = static_cast<std::size_t>(first_layer.rows());
    mask.epsilon = epsilon;
    for (Eigen::Index d = 0; d < first_layer.rows(); ++d)
        if (first_layer.row(d).norm() < epsilon) mask.pruned.push_back(static_cast<std::size_t>(d));
    return mask;
}

SparseSample encode(std::span<const double> x, int label, const FeatureMask& mask,
                    std::uint32_t mask_id) {
    if (x.size() != mask.dim) throw std::invalid_argument("encode: sample/mask dimension mismatch");
    SparseSample s;
    s.label = label;
    s.mask_id = mask_id;
    s.indices.reserve(mask.live_count());
    s.values.reserve(mask.live_count());
    auto next_pruned = mask.pruned.begin();
    for (std::size_t d = 0; d < x.size(); ++d) {
        if (next_pruned != mask.pruned.end() && *next_pruned == d) {
            ++next_pruned;
            continue;
        }
        s.indices.push_back(static_cast<std::uint32_t>(d));
        s.values.push_back(x[d]);
    }
    s.cost = s.indices.size();
    return s;
}

Vector decode(const SparseSample& sample, std::size_t dim) {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < sample.indices.size(); ++i) {
        if (sample.indices[i] >= dim) throw std::out_of_range("decode: feature index beyond dimension");
        x[sample.indices[i]] = sample.values[i];
    }
    return x;
}

BudgetMode parse_budget_mode(std::string_view name) {
    if (name == "units") return BudgetMode::units;
    if (name == "index_value" || name == "index-value") return BudgetMode::index_value;
    if (name == "count") return BudgetMode::count;
    throw std::invalid_argument("unknown budget mode: " + std::string(name));
}

ReplayBuffer::ReplayBuffer(std::size_t dim, std::size_t budget_units, BudgetMode mode)
    : dim_(dim), budget_units_(budget_units), mode_(mode) {}

ReplayBuffer ReplayBuffer::for_nominal(std::size_t dim, std::size_t nominal, BudgetMode mode) {
    switch (mode) {
        case BudgetMode::units: return ReplayBuffer(dim, nominal * dim, mode);
        case BudgetMode::index_value: return ReplayBuffer(dim, 2 * nominal * dim, mode);
        case BudgetMode::count: return ReplayBuffer(dim, nominal, mode);
    }
    throw std::invalid_argument("unknown budget mode");
}

std::size_t ReplayBuffer::charge(const SparseSample& sample) const {
    switch (mode_) {
        case BudgetMode::units: return sample.cost;
        case BudgetMode::index_value: return 2 * sample.cost;
        case BudgetMode::count: return 1;
    }
    return sample.cost;
}

std::uint32_t ReplayBuffer::register_mask(const FeatureMask& mask) {
    if (mask.dim != dim_) throw std::invalid_argument("register_mask: dimension mismatch");
    for (const auto& [id, known] : masks_)
        if (known == mask) return id;
    const std::uint32_t id = next_mask_id_++;
    masks_.emplace(id, mask);
    return id;
}

const FeatureMask& ReplayBuffer::mask(std::uint32_t id) const {
    auto it = masks_.find(id);
    if (it == masks_.end()) throw std::out_of_range("unknown mask id " + std::to_string(id));
    return it->second;
}

std::uint64_t ReplayBuffer::insert(SparseSample sample, double score) {
    const std::size_t units = charge(sample);
    if (used_units_ + units > budget_units_) throw std::length_error("replay buffer budget exceeded");
    used_units_ += units;
    const std::uint64_t uid = next_uid_++;
    entries_.push_back(Entry{std::move(sample), score, uid});
    return uid;
}

void ReplayBuffer::erase(std::vector<std::size_t> positions) {
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    for (auto it = positions.rbegin(); it != positions.rend(); ++it) {
        if (*it >= entries_.size()) throw std::out_of_range("erase: position out of range");
        used_units_ -= charge(entries_[*it].sample);
        entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(*it));
    }
}

Vector ReplayBuffer::decode(std::size_t position) const {
    return smart::decode(entries_.at(position).sample, dim_);
}

namespace {

void write_double(std::ostream& out, double value) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("failed to format value");
    out.write(buf, end - buf);
}

double read_double(std::string_view text) {
    double value = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::runtime_error("SMARTBUF: bad number '" + std::string(text) + "'");
    return value;
}

template <typename Int>
Int read_int(std::string_view text) {
    Int value{};
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::runtime_error("SMARTBUF: bad integer '" + std::string(text) + "'");
    return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    if (text.empty()) return parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string_view after_prefix(std::string_view token, std::string_view prefix) {
    if (token.substr(0, prefix.size()) != prefix)
        throw std::runtime_error("SMARTBUF: expected '" + std::string(prefix) + "'");
    return token.substr(prefix.size());
}

}  // namespace

void ReplayBuffer::save(std::ostream& out) const {
    out << "SMARTBUF v1 D=" << dim_ << " budget=" << budget_units_ << '\n';
    for (const Entry& e : entries_) {
        out << e.sample.mask_id << ';' << e.sample.label << ';';
        for (std::size_t i = 0; i < e.sample.indices.size(); ++i) {
            if (i > 0) out << ',';
            out << e.sample.indices[i] << ':';
            write_double(out, e.sample.values[i]);
        }
        out << '\n';
    }
    for (const auto& [id, m] : masks_) {
        out << "MASK " << id << " eps=";
        write_double(out, m.epsilon);
        out << " pruned=";
        for (std::size_t i = 0; i < m.pruned.size(); ++i) {
            if (i > 0) out << ',';
            out << m.pruned[i];
        }
        out << '\n';
    }
}

ReplayBuffer ReplayBuffer::load(std::istream& in, BudgetMode mode) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("SMARTBUF: empty stream");
    const auto header = split(line, ' ');
    if (header.size() != 4 || header[0] != "SMARTBUF" || header[1] != "v1")
        throw std::runtime_error("SMARTBUF: bad header");
    const auto dim = read_int<std::size_t>(after_prefix(header[2], "D="));
    const auto budget = read_int<std::size_t>(after_prefix(header[3], "budget="));
    ReplayBuffer buffer(dim, budget, mode);

    std::vector<SparseSample> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("MASK ", 0) == 0) {
            const auto parts = split(line, ' ');
            if (parts.size() != 4) throw std::runtime_error("SMARTBUF: bad mask line");
            FeatureMask m;
            m.dim = dim;
            const auto id = read_int<std::uint32_t>(parts[1]);
            m.epsilon = read_double(after_prefix(parts[2], "eps="));
            for (auto tok : split(after_prefix(parts[3], "pruned="), ','))
                m.pruned.push_back(read_int<std::size_t>(tok));
            m.validate();
            buffer.masks_.emplace(id, std::move(m));
            buffer.next_mask_id_ = std::max(buffer.next_mask_id_, id + 1);
            continue;
        }
        const auto fields = split(line, ';');
        if (fields.size() != 3) throw std::runtime_error("SMARTBUF: bad record '" + line + "'");
        SparseSample s;
        s.mask_id = read_int<std::uint32_t>(fields[0]);
        s.label = read_int<int>(fields[1]);
        for (auto pair : split(fields[2], ',')) {
            const auto colon = pair.find(':');
            if (colon == std::string_view::npos) throw std::runtime_error("SMARTBUF: bad feature pair");
            s.indices.push_back(read_int<std::uint32_t>(pair.substr(0, colon)));
            s.values.push_back(read_double(pair.substr(colon + 1)));
        }
        s.cost = s.indices.size();
        samples.push_back(std::move(s));
    }
    for (auto& s : samples) {
        if (!buffer.masks_.contains(s.mask_id)) throw std::runtime_error("SMARTBUF: record references unknown mask");
        buffer.insert(std::move(s), 1.0);
    }
    return buffer;
}

BufferStats stats(const ReplayBuffer& buffer) {
    BufferStats out;
    out.effective_samples = buffer.size();
    out.used_units = buffer.used_units();
    out.budget_units = buffer.budget_units();
    for (const auto& e : buffer.entries()) out.per_task_counts[e.sample.task] += 1;
    out.occupancy = buffer.budget_units() == 0
                        ? 0.0
                        : static_cast<double>(buffer.used_units()) / static_cast<double>(buffer.budget_units());
    return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<std::size_t> draw_comparisons(const ReplayBuffer& buffer, std::size_t k, Rng& rng) {
    std::vector<std::size_t> all(buffer.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const std::size_t take = std::min(k, all.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + uniform_index(rng, all.size() - i);
        std::swap(all[i], all[j]);
    }
    all.resize(take);
    return all;
}

double gss_score(std::span<const double> cosines) {
    if (cosines.empty()) return 0.0;
    return 1.0 + *std::max_element(cosines.begin(), cosines.end());
}

Admission gss_greedy_admit(ReplayBuffer& buffer, SparseSample candidate, double score, Rng& rng) {
    Admission out;
    const std::size_t units = buffer.charge(candidate);
    if (units > buffer.budget_units()) {
        out.diagnostic = "candidate cost " + std::to_string(units) + " exceeds budget " +
                         std::to_string(buffer.budget_units());
        return out;
    }
    if (buffer.fits(candidate)) {
        buffer.insert(std::move(candidate), score);
        out.accepted = true;
        return out;
    }

    const auto entries = buffer.entries();
    const std::size_t needed = buffer.used_units() + units - buffer.budget_units();
    std::vector<std::size_t> pool(entries.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<std::size_t> victims;
    std::size_t freed = 0;
    while (freed < needed) {
        if (pool.empty()) {
            out.diagnostic = "not enough evictable entries";
            return out;
        }
        double total = 0.0;
        for (std::size_t p : pool) total += entries[p].score;
        std::size_t pick = pool.size() - 1;
        if (total > 0.0) {
            double target = uniform01(rng) * total;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                target -= entries[pool[i]].score;
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_index(rng, pool.size());
        }
        const std::size_t victim = pool[pick];
        if (!(score < entries[victim].score)) {
            out.diagnostic = "candidate score not below victim score";
            return out;
        }
        victims.push_back(victim);
        freed += buffer.charge(entries[victim].sample);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    for (std::size_t v : victims) out.evicted.push_back(entries[v].uid);
    buffer.erase(victims);
    buffer.insert(std::move(candidate), score);
    out.accepted = true;
    return out;
}

bool gss_greedy_offer(ReplayBuffer& buffer, SparseSample candidate, const GradientFn& grad_of,
                      Rng& rng, const GssConfig& config, Admission* outcome) {
    double score = 0.0;
    if (!buffer.empty()) {
        const GradVec g = grad_of(candidate);
        std::vector<double> cosines;
        for (std::size_t pos : draw_comparisons(buffer, config.comparisons, rng))
            cosines.push_back(cosine_similarity(g.values(), grad_of(buffer.entries()[pos].sample).values()));
        score = gss_score(cosines);
    }
    Admission admission = gss_greedy_admit(buffer, std::move(candidate), score, rng);
    const bool accepted = admission.accepted;
    if (outcome != nullptr) *outcome = std::move(admission);
    return accepted;
}

std::vector<std::size_t> sample_replay(const ReplayBuffer& buffer, std::size_t n, Rng& rng) {
    std::vector<std::size_t> out;
    if (buffer.empty() || n == 0) return out;
    out.reserve(n);
    std::vector<std::size_t> order(buffer.size());
    while (out.size() < n) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        const std::size_t take = std::min(n - out.size(), order.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + uniform_index(rng, order.size() - i);
            std::swap(order[i], order[j]);
            out.push_back(order[i]);
        }
    }
    return out;
}

Batch decode_batch(const ReplayBuffer& buffer, std::span<const std::size_t> positions) {
    Batch batch;
    batch.inputs = Matrix::Zero(static_cast<Eigen::Index>(positions.size()),
                                static_cast<Eigen::Index>(buffer.dim()));
    batch.labels.reserve(positions.size());
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const SparseSample& s = buffer.entries()[positions[r]].sample;
        for (std::size_t i = 0; i < s.indices.size(); ++i)
            batch.inputs(static_cast<Eigen::Index>(r), s.indices[i]) = s.values[i];
        batch.labels.push_back(s.label);
    }
    return batch;
}

}  // namespace smart
