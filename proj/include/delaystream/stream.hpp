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

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace delaystream {

using SampleId = std::int64_t;
using FeatureVector = std::vector<double>;

/// A stream sample together with its ground truth. Only the stream itself,
/// the evaluation harness and the held-out validation set ever see this type.
struct Sample {
    SampleId id = 0;
    FeatureVector features;
    int true_label = 0;
    int origin_step = 0;
};

/// What a learner sees of a freshly revealed sample: no label.
struct UnlabeledSample {
    SampleId id = 0;
    FeatureVector features;
    int origin_step = 0;
};

struct StreamBatch {
    int step = 0;
    std::vector<UnlabeledSample> samples;
};

struct LabelPair {
    SampleId sample_id = 0;
    int label = 0;
};

/// Labels for the batch revealed at `origin_step`, delivered `d` steps later.
struct DelayedLabelBatch {
    int origin_step = 0;
    std::vector<LabelPair> pairs;
};

enum class GeneratorVariant { rotating_gaussians, abrupt_shift, label_burst, file };

std::string_view to_string(GeneratorVariant variant);
std::optional<GeneratorVariant> parse_generator_variant(std::string_view name);

/// Rows of an ingested CSV stream, in file order.
struct IngestedStream {
    int dim = 0;
    int num_classes = 0;
    std::vector<int> steps;
    std::vector<int> labels;
    std::vector<FeatureVector> features;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
};

struct GeneratorSpec {
    GeneratorVariant variant = GeneratorVariant::rotating_gaussians;
    int num_classes = 4;
    int dim = 8;
    double noise = 0.5;  ///< isotropic standard deviation
    double omega = 0.0;  ///< angular velocity of the class means, radians per step
    double radius = 1.0; ///< distance of the class means from the origin
    /// Label runs of this length share one uniformly drawn label. 1 = i.i.d.
    int burst_length = 1;
    int shift_step = 1;  ///< abrupt_shift: first step drawn from the shifted distribution
    double shift = 0.0;  ///< abrupt_shift: translation of every class mean along the first axis
    std::filesystem::path path;
    std::shared_ptr<const IngestedStream> rows; ///< file variant, filled by ingest_file
};

struct StreamConfig {
    int n = 32;
    int delay = 0;
    int horizon = 100;
    GeneratorSpec generator;
    std::uint64_t seed = 0;
    double validation_fraction = 0.0;
};

/// Throws ConfigError naming the offending field.
void validate(const StreamConfig& config);

/// Class mean at a given step (first two coordinates rotate; abrupt_shift
/// translates along the first axis from shift_step onwards).
FeatureVector class_mean(const GeneratorSpec& spec, int label, int step);

/// Label of the global sample index `index`. Runs of burst_length indices
/// share one label drawn uniformly from the label sub-seed.
int sample_label(const GeneratorSpec& spec, std::uint64_t seed, std::int64_t index);

/// Samples with global indices [first_index, first_index + count), all
/// revealed at `step`. Deterministic in (spec, seed, step, first_index).
std::vector<Sample> generate_samples(const GeneratorSpec& spec, std::uint64_t seed, int step,
                                     std::int64_t first_index, int count);

/// Stream and withheld sample counts for one step.
struct StepLayout {
    std::int64_t first_index = 0;
    int stream_count = 0;
    int validation_count = 0;
};
StepLayout step_layout(const StreamConfig& config, int step);

/// Reads the ingestion CSV (`step,label,f0,...,f{D-1}`). Throws StreamError
/// on unsorted steps, ragged rows, or non-integer labels.
GeneratorSpec ingest_file(const std::filesystem::path& path);
IngestedStream read_stream_csv(std::istream& in, std::string_view source_name);

/// Writes samples in the ingestion CSV format.
void write_stream_csv(std::ostream& out, std::span<const Sample> samples, int dim);

class EvaluationAccess;

/// Passkey for the privileged ground-truth accessor.
class EvaluationKey {
    friend class EvaluationAccess;
    EvaluationKey() = default;
};

/// One stream run: yields a StreamBatch per step and, from step d+1 on, the
/// DelayedLabelBatch for step t-d. Movable, not copyable, single-threaded.
class StreamHandle {
public:
    struct Tick {
        StreamBatch batch;
        std::optional<DelayedLabelBatch> labels;
    };

    explicit StreamHandle(StreamConfig config);

    StreamHandle(StreamHandle&&) noexcept = default;
    StreamHandle& operator=(StreamHandle&&) noexcept = default;
    StreamHandle(const StreamHandle&) = delete;
    StreamHandle& operator=(const StreamHandle&) = delete;
    ~StreamHandle() = default;

    [[nodiscard]] bool done() const { return step_ >= config_.horizon; }
    [[nodiscard]] int step() const { return step_; }
    [[nodiscard]] const StreamConfig& config() const { return config_; }
    [[nodiscard]] int dim() const;
    [[nodiscard]] int num_classes() const;

    /// Advances to the next step. Throws StreamError past the horizon.
    Tick next();

    /// Held-out samples, disjoint from the stream, sorted by origin step.
    [[nodiscard]] std::span<const Sample> validation_set() const { return validation_; }

    /// Ground truth of the batch revealed by the latest next().
    [[nodiscard]] std::span<const int> current_labels(EvaluationKey /*key*/) const { return current_labels_; }

private:
    std::vector<Sample> samples_for_step(int step) const;

    StreamConfig config_;
    int step_ = 0;
    std::vector<Sample> validation_;
    std::vector<int> current_labels_;
    std::deque<DelayedLabelBatch> pending_labels_;
};

StreamHandle open_stream(const StreamConfig& config);

} // namespace delaystream
