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
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "delaystream/rng.hpp"
#include "delaystream/stream.hpp"

namespace delaystream {

inline constexpr std::size_t kDefaultBufferCapacity = 4096;

/// Additive floor on clamped similarities so every candidate stays reachable.
inline constexpr double kSimilarityFloor = 1e-6;

/// A labeled sample in replay memory. `cached_feature` is h(x) as computed
/// when the sample was predicted and is never recomputed afterwards.
struct MemoryEntry {
    SampleId sample_id = 0;
    FeatureVector features;
    int true_label = 0;
    FeatureVector cached_feature;
    int inserted_at = 0;
    int origin_step = 0;
};

enum class IwmsMode { two_stage, single_shot };

std::string_view to_string(IwmsMode mode);
std::optional<IwmsMode> parse_iwms_mode(std::string_view name);

/// Cosine similarity; 0 when either norm is below 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

/// K[i][j] = cosine(queries[i], candidates[j]).
std::vector<std::vector<double>> similarity_matrix(std::span<const FeatureVector> queries,
                                                   std::span<const FeatureVector> candidates);

/// Multinomial weights max(K, 0) + floor, normalized to sum 1.
std::vector<double> selection_probabilities(std::span<const double> similarities);

/// Fixed-capacity FIFO replay memory.
class MemoryBuffer {
public:
    explicit MemoryBuffer(std::size_t capacity = kDefaultBufferCapacity);

    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] bool empty() const { return entries_.empty(); }
    [[nodiscard]] const std::deque<MemoryEntry>& entries() const { return entries_; }
    [[nodiscard]] bool contains(SampleId id) const { return ids_.contains(id); }

    /// Appends a newly labeled sample, evicting the oldest entry when full.
    /// Throws BufferError for an id already held.
    void insert_labeled(const UnlabeledSample& sample, int label, FeatureVector cached_feature, int step);

    /// Uniform draws with replacement. Throws BufferError when empty.
    [[nodiscard]] std::vector<MemoryEntry> sample_random(std::size_t count, Rng& rng) const;

    /// Importance-weighted memory sampling.
    ///
    /// Draw k uses query i = k mod |queries|. In two_stage mode the candidates
    /// are the entries whose true label equals predicted[i]; if there are none,
    /// or in single_shot mode, every entry is a candidate. One candidate is
    /// then drawn with probability proportional to
    /// max(cosine(queries[i], cached_feature), 0) + 1e-6.
    [[nodiscard]] std::vector<MemoryEntry> iwms_select(std::span<const FeatureVector> queries,
                                                       std::span<const int> predicted, std::size_t count, Rng& rng,
                                                       IwmsMode mode) const;

    /// Cached features are intentionally stale: they are written once at
    /// insertion and never refreshed after parameter updates. Kept as an
    /// explicit, checkable statement of that policy; verifies that every
    /// entry still matches the hash recorded at insertion and throws
    /// BufferError otherwise.
    void refresh_policy() const;

    /// Order-sensitive hash over ids, labels, steps, features and cached features.
    [[nodiscard]] std::uint64_t snapshot_hash() const;

    /// CSV `sample_id,true_label,inserted_at,f0..,c0..`.
    void dump_csv(std::ostream& out) const;

private:
    std::size_t capacity_;
    std::deque<MemoryEntry> entries_;
    std::deque<std::uint64_t> entry_hashes_;
    std::deque<FeatureVector> unit_cached_; ///< cached_feature / norm, or zeros below the norm floor
    std::unordered_set<SampleId> ids_;
};

} // namespace delaystream
