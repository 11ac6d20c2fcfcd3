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
#include "delaystream/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "delaystream/csv.hpp"
#include "delaystream/errors.hpp"
#include "delaystream/rng.hpp"

namespace delaystream {

std::string_view to_string(GeneratorVariant variant) {
    switch (variant) {
    case GeneratorVariant::rotating_gaussians:
        return "rotating_gaussians";
    case GeneratorVariant::abrupt_shift:
        return "abrupt_shift";
    case GeneratorVariant::label_burst:
        return "label_burst";
    case GeneratorVariant::file:
        return "file";
    }
    return "unknown";
}

std::optional<GeneratorVariant> parse_generator_variant(std::string_view name) {
    for (const auto v : {GeneratorVariant::rotating_gaussians, GeneratorVariant::abrupt_shift,
                         GeneratorVariant::label_burst, GeneratorVariant::file}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    return std::nullopt;
}

void validate(const StreamConfig& config) {
    if (config.n < 1) {
        throw ConfigError("stream.n: batch size must be >= 1");
    }
    if (config.delay < 0) {
        throw ConfigError("stream.delay: label delay must be >= 0");
    }
    if (config.horizon < 1) {
        throw ConfigError("stream.horizon: must be >= 1");
    }
    if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
        throw ConfigError("stream.validation_fraction: must lie in [0, 1)");
    }
    const auto& g = config.generator;
    if (g.variant == GeneratorVariant::file) {
        if (!g.rows) {
            throw ConfigError("stream.generator.path: file stream has not been ingested");
        }
        if (config.validation_fraction != 0.0) {
            throw ConfigError("stream.validation_fraction: file streams carry no held-out split, must be 0");
        }
        const auto needed = static_cast<std::size_t>(config.horizon) * static_cast<std::size_t>(config.n);
        if (g.rows->size() < needed) {
            throw StreamError("stream.generator.path: " + std::to_string(g.rows->size()) +
                              " rows do not cover horizon*n = " + std::to_string(needed));
        }
        if (g.num_classes < g.rows->num_classes) {
            throw ConfigError("stream.generator.num_classes: file contains label " +
                              std::to_string(g.rows->num_classes - 1));
        }
        if (g.dim != g.rows->dim) {
            throw ConfigError("stream.generator.dim: file has " + std::to_string(g.rows->dim) + " features");
        }
        return;
    }
    if (g.num_classes < 2) {
        throw ConfigError("stream.generator.num_classes: must be >= 2");
    }
    if (g.dim < 2) {
        throw ConfigError("stream.generator.dim: must be >= 2");
    }
    if (!(g.noise >= 0.0) || !std::isfinite(g.noise)) {
        throw ConfigError("stream.generator.noise: must be finite and >= 0");
    }
    if (!std::isfinite(g.omega) || !std::isfinite(g.radius) || !std::isfinite(g.shift)) {
        throw ConfigError("stream.generator: omega, radius and shift must be finite");
    }
    if (g.burst_length < 1) {
        throw ConfigError("stream.generator.burst_length: must be >= 1");
    }
    if (g.variant == GeneratorVariant::abrupt_shift && (g.shift_step < 1 || g.shift_step > config.horizon)) {
        throw ConfigError("stream.generator.shift_step: must lie within [1, horizon]");
    }
}

FeatureVector class_mean(const GeneratorSpec& spec, int label, int step) {
    FeatureVector mean(static_cast<std::size_t>(spec.dim), 0.0);
    const double omega = spec.variant == GeneratorVariant::abrupt_shift ? 0.0 : spec.omega;
    const double angle = 2.0 * std::numbers::pi * label / spec.num_classes + omega * step;
    mean[0] = spec.radius * std::cos(angle);
    mean[1] = spec.radius * std::sin(angle);
    if (spec.variant == GeneratorVariant::abrupt_shift && step >= spec.shift_step) {
        mean[0] += spec.shift;
    }
    return mean;
}

int sample_label(const GeneratorSpec& spec, std::uint64_t seed, std::int64_t index) {
    const auto run = static_cast<std::uint64_t>(index / spec.burst_length);
    Rng rng(derive_seed(seed, "labels", run));
    return static_cast<int>(rng.index(static_cast<std::size_t>(spec.num_classes)));
}

std::vector<Sample> generate_samples(const GeneratorSpec& spec, std::uint64_t seed, int step,
                                     std::int64_t first_index, int count) {
    if (spec.variant == GeneratorVariant::file) {
        throw StreamError("generate_samples: file streams are replayed, not generated");
    }
    Rng noise(derive_seed(derive_seed(seed, "features", static_cast<std::uint64_t>(step)), "offset",
                          static_cast<std::uint64_t>(first_index)));
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Sample s;
        s.id = first_index + i;
        s.origin_step = step;
        s.true_label = sample_label(spec, seed, s.id);
        s.features = class_mean(spec, s.true_label, step);
        for (auto& x : s.features) {
            x += spec.noise * noise.normal();
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

StepLayout step_layout(const StreamConfig& config, int step) {
    const auto n = static_cast<std::int64_t>(config.n);
    const auto horizon = static_cast<std::int64_t>(config.horizon);
    const double f = config.validation_fraction;
    const auto total_validation =
        f > 0.0 ? static_cast<std::int64_t>(std::llround(f * static_cast<double>(n * horizon) / (1.0 - f))) : 0;
    const auto withheld_before = [&](std::int64_t t) { return t * total_validation / horizon; };
    StepLayout layout;
    layout.first_index = (step - 1) * n + withheld_before(step - 1);
    layout.stream_count = config.n;
    layout.validation_count = static_cast<int>(withheld_before(step) - withheld_before(step - 1));
    return layout;
}

IngestedStream read_stream_csv(std::istream& in, std::string_view source_name) {
    const std::string where(source_name);
    std::string line;
    if (!std::getline(in, line)) {
        throw StreamError(where + ": empty file, expected header step,label,f0,...");
    }
    const auto header = csv::split(csv::chomp(line));
    if (header.size() < 3 || header[0] != "step" || header[1] != "label") {
        throw StreamError(where + ": header must be step,label,f0,...,f{D-1}");
    }
    IngestedStream rows;
    rows.dim = static_cast<int>(header.size() - 2);
    for (int j = 0; j < rows.dim; ++j) {
        if (header[static_cast<std::size_t>(j) + 2] != "f" + std::to_string(j)) {
            throw StreamError(where + ": header column " + std::to_string(j + 2) + " must be f" + std::to_string(j));
        }
    }
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto record = csv::chomp(line);
        if (record.empty()) {
            continue;
        }
        const auto fields = csv::split(record);
        const auto at = where + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != header.size()) {
            throw StreamError(at + "ragged row, expected " + std::to_string(rows.dim) + " features, got " +
                              std::to_string(static_cast<long>(fields.size()) - 2));
        }
        const auto step = csv::parse_int(fields[0]);
        if (!step) {
            throw StreamError(at + "step is not an integer");
        }
        if (!rows.steps.empty() && *step < rows.steps.back()) {
            throw StreamError(at + "rows are not sorted by step");
        }
        const auto label = csv::parse_int(fields[1]);
        if (!label || *label < 0) {
            throw StreamError(at + "label is not a non-negative integer");
        }
        FeatureVector features(static_cast<std::size_t>(rows.dim));
        for (std::size_t j = 0; j < features.size(); ++j) {
            const auto value = csv::parse_double(fields[j + 2]);
            if (!value) {
                throw StreamError(at + "feature f" + std::to_string(j) + " is not a number");
            }
            features[j] = *value;
        }
        rows.steps.push_back(static_cast<int>(*step));
        rows.labels.push_back(static_cast<int>(*label));
        rows.features.push_back(std::move(features));
        max_label = std::max(max_label, static_cast<int>(*label));
    }
    rows.num_classes = max_label + 1;
    return rows;
}

GeneratorSpec ingest_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw StreamError(path.string() + ": cannot open stream file");
    }
    auto rows = std::make_shared<IngestedStream>(read_stream_csv(in, path.string()));
    GeneratorSpec spec;
    spec.variant = GeneratorVariant::file;
    spec.path = path;
    spec.dim = rows->dim;
    spec.num_classes = std::max(2, rows->num_classes);
    spec.rows = std::move(rows);
    return spec;
}

void write_stream_csv(std::ostream& out, std::span<const Sample> samples, int dim) {
    out << "step,label";
    for (int j = 0; j < dim; ++j) {
        out << ",f" << j;
    }
    out << '\n';
    for (const auto& s : samples) {
        out << s.origin_step << ',' << s.true_label;
        for (const double x : s.features) {
            out << ',' << csv::format_double(x);
        }
        out << '\n';
    }
}

StreamHandle::StreamHandle(StreamConfig config) : config_(std::move(config)) {
    validate(config_);
    if (config_.generator.variant != GeneratorVariant::file && config_.validation_fraction > 0.0) {
        for (int t = 1; t <= config_.horizon; ++t) {
            const auto layout = step_layout(config_, t);
            if (layout.validation_count == 0) {
                continue;
            }
            auto held = generate_samples(config_.generator, config_.seed, t,
                                         layout.first_index + layout.stream_count, layout.validation_count);
            std::move(held.begin(), held.end(), std::back_inserter(validation_));
        }
    }
}

int StreamHandle::dim() const { return config_.generator.dim; }

int StreamHandle::num_classes() const { return config_.generator.num_classes; }

std::vector<Sample> StreamHandle::samples_for_step(int step) const {
    const auto layout = step_layout(config_, step);
    if (config_.generator.variant != GeneratorVariant::file) {
        return generate_samples(config_.generator, config_.seed, step, layout.first_index, layout.stream_count);
    }
    const auto& rows = *config_.generator.rows;
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(config_.n));
    for (int i = 0; i < config_.n; ++i) {
        const auto row = static_cast<std::size_t>(layout.first_index + i);
        samples.push_back(Sample{static_cast<SampleId>(row), rows.features[row], rows.labels[row], step});
    }
    return samples;
}

StreamHandle::Tick StreamHandle::next() {
    if (done()) {
        throw StreamError("stream exhausted at horizon " + std::to_string(config_.horizon));
    }
    ++step_;
    auto samples = samples_for_step(step_);

    Tick tick;
    tick.batch.step = step_;
    tick.batch.samples.reserve(samples.size());
    DelayedLabelBatch labels;
    labels.origin_step = step_;
    labels.pairs.reserve(samples.size());
    current_labels_.clear();
    for (auto& s : samples) {
        labels.pairs.push_back(LabelPair{s.id, s.true_label});
        current_labels_.push_back(s.true_label);
        tick.batch.samples.push_back(UnlabeledSample{s.id, std::move(s.features), s.origin_step});
    }
    pending_labels_.push_back(std::move(labels));

    // The batch revealed d steps ago (or this one, for d == 0) is now annotated.
    if (step_ - config_.delay >= 1) {
        tick.labels = std::move(pending_labels_.front());
        pending_labels_.pop_front();
    }
    return tick;
}

StreamHandle open_stream(const StreamConfig& config) { return StreamHandle(config); }

} // namespace delaystream
