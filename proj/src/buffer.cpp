/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include "delaystream/buffer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <ostream>

#include "delaystream/csv.hpp"
#include "delaystream/errors.hpp"

namespace delaystream {

namespace {

std::uint64_t hash_entry(const MemoryEntry& e, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    const auto mix = [&hash](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            hash ^= (v >> (8 * i)) & 0xffU;
            hash *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint64_t>(e.sample_id));
    mix(static_cast<std::uint64_t>(e.true_label));
    mix(static_cast<std::uint64_t>(e.inserted_at));
    mix(static_cast<std::uint64_t>(e.origin_step));
    for (const double x : e.features) {
        mix(std::bit_cast<std::uint64_t>(x));
    }
    for (const double x : e.cached_feature) {
        mix(std::bit_cast<std::uint64_t>(x));
    }
    return hash;
}

FeatureVector unit(std::span<const double> v) {
    double sq = 0.0;
    for (const double x : v) {
        sq += x * x;
    }
    const double norm = std::sqrt(sq);
    FeatureVector out(v.size(), 0.0);
    if (norm >= 1e-12) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[i] = v[i] / norm;
        }
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        acc += u[i] * v[i];
    }
    return acc;
}

// Inverse-CDF draw over an unnormalized cumulative weight table.
std::size_t draw_index(const std::vector<double>& cumulative, Rng& rng) {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

} // namespace

std::string_view to_string(IwmsMode mode) { return mode == IwmsMode::two_stage ? "two_stage" : "single_shot"; }

std::optional<IwmsMode> parse_iwms_mode(std::string_view name) {
    if (name == "two_stage") {
        return IwmsMode::two_stage;
    }
    if (name == "single_shot") {
        return IwmsMode::single_shot;
    }
    return std::nullopt;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine: dimension mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    }
    double dot = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    const double nu = std::sqrt(uu);
    const double nv = std::sqrt(vv);
    if (nu < 1e-12 || nv < 1e-12) {
        return 0.0;
    }
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

std::vector<std::vector<double>> similarity_matrix(std::span<const FeatureVector> queries,
                                                   std::span<const FeatureVector> candidates) {
    std::vector<std::vector<double>> k(queries.size(), std::vector<double>(candidates.size()));
    for (std::size_t i = 0; i < queries.size(); ++i) {
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            k[i][j] = cosine(queries[i], candidates[j]);
        }
    }
    return k;
}

std::vector<double> selection_probabilities(std::span<const double> similarities) {
    std::vector<double> w(similarities.size());
    double total = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::max(similarities[j], 0.0) + kSimilarityFloor;
        total += w[j];
    }
    for (auto& x : w) {
        x /= total;
    }
    return w;
}

MemoryBuffer::MemoryBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw ConfigError("buffer capacity must be positive");
    }
}

void MemoryBuffer::insert_labeled(const UnlabeledSample& sample, int label, FeatureVector cached_feature, int step) {
    if (ids_.contains(sample.id)) {
        throw BufferError("duplicate sample id " + std::to_string(sample.id) + " in replay memory");
    }
    if (entries_.size() == capacity_) {
        ids_.erase(entries_.front().sample_id);
        entries_.pop_front();
        entry_hashes_.pop_front();
        unit_cached_.pop_front();
    }
    if (!entries_.empty() && cached_feature.size() != entries_.front().cached_feature.size()) {
        throw ShapeError("insert_labeled: cached feature dimension differs from the buffer's");
    }
    MemoryEntry entry{sample.id, sample.features, label, std::move(cached_feature), step, sample.origin_step};
    entry_hashes_.push_back(hash_entry(entry));
    unit_cached_.push_back(unit(entry.cached_feature));
    ids_.insert(entry.sample_id);
    entries_.push_back(std::move(entry));
}

std::vector<MemoryEntry> MemoryBuffer::sample_random(std::size_t count, Rng& rng) const {
    if (entries_.empty()) {
        throw BufferError("sample_random: replay memory is empty");
    }
    std::vector<MemoryEntry> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(entries_[rng.index(entries_.size())]);
    }
    return out;
}

std::vector<MemoryEntry> MemoryBuffer::iwms_select(std::span<const FeatureVector> queries,
                                                   std::span<const int> predicted, std::size_t count, Rng& rng,
                                                   IwmsMode mode) const {
    if (entries_.empty()) {
        throw BufferError("iwms_select: replay memory is empty");
    }
    if (queries.size() != predicted.size() || queries.empty()) {
        throw ShapeError("iwms_select: need one predicted label per query and a non-empty batch");
    }
    if (queries.front().size() != entries_.front().cached_feature.size()) {
        throw ShapeError("iwms_select: query features do not match the cached feature dimension");
    }

    std::vector<std::size_t> everyone(entries_.size());
    for (std::size_t j = 0; j < everyone.size(); ++j) {
        everyone[j] = j;
    }
    std::map<int, std::vector<std::size_t>> by_label;
    if (mode == IwmsMode::two_stage) {
        for (std::size_t j = 0; j < entries_.size(); ++j) {
            by_label[entries_[j].true_label].push_back(j);
        }
    }

    // Candidate sets and cumulative weights per query, built once per call.
    const std::size_t active = std::min(count, queries.size());
    std::vector<const std::vector<std::size_t>*> candidates(active);
    std::vector<std::vector<double>> cumulative(active);
    for (std::size_t i = 0; i < active; ++i) {
        candidates[i] = &everyone;
        if (mode == IwmsMode::two_stage) {
            const auto match = by_label.find(predicted[i]);
            if (match != by_label.end()) {
                candidates[i] = &match->second;
            }
        }
        const auto query = unit(queries[i]);
        auto& cdf = cumulative[i];
        cdf.reserve(candidates[i]->size());
        double running = 0.0;
        for (const auto j : *candidates[i]) {
            const double similarity = std::clamp(dot(query, unit_cached_[j]), -1.0, 1.0);
            running += std::max(similarity, 0.0) + kSimilarityFloor;
            cdf.push_back(running);
        }
    }

    std::vector<MemoryEntry> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = k % queries.size();
        const auto pick = (*candidates[i])[draw_index(cumulative[i], rng)];
        out.push_back(entries_[pick]);
    }
    return out;
}

void MemoryBuffer::refresh_policy() const {
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        if (hash_entry(entries_[j]) != entry_hashes_[j]) {
            throw BufferError("replay entry " + std::to_string(entries_[j].sample_id) + " changed after insertion");
        }
    }
}

std::uint64_t MemoryBuffer::snapshot_hash() const {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const auto& e : entries_) {
        hash = hash_entry(e, hash);
    }
    return hash;
}

void MemoryBuffer::dump_csv(std::ostream& out) const {
    const std::size_t dim = entries_.empty() ? 0 : entries_.front().features.size();
    const std::size_t cached = entries_.empty() ? 0 : entries_.front().cached_feature.size();
    out << "sample_id,true_label,inserted_at";
    for (std::size_t j = 0; j < dim; ++j) {
        out << ",f" << j;
    }
    for (std::size_t j = 0; j < cached; ++j) {
        out << ",c" << j;
    }
    out << '\n';
    for (const auto& e : entries_) {
        out << e.sample_id << ',' << e.true_label << ',' << e.inserted_at;
        for (const double x : e.features) {
            out << ',' << csv::format_double(x);
        }
        for (const double x : e.cached_feature) {
            out << ',' << csv::format_double(x);
        }
        out << '\n';
    }
}

} // namespace delaystream
