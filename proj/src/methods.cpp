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
#include "delaystream/methods.hpp"

#include <cmath>
#include <deque>

#include "delaystream/errors.hpp"

namespace delaystream {

std::string_view to_string(MethodVariant variant) {
    switch (variant) {
    case MethodVariant::naive:
        return "naive";
    case MethodVariant::iwms:
        return "iwms";
    case MethodVariant::pseudo_label:
        return "pseudo_label";
    case MethodVariant::tta:
        return "tta";
    }
    return "unknown";
}

std::optional<MethodVariant> parse_method_variant(std::string_view name) {
    for (const auto v : {MethodVariant::naive, MethodVariant::iwms, MethodVariant::pseudo_label, MethodVariant::tta}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    return std::nullopt;
}

char to_code(BatchSource source) {
    switch (source) {
    case BatchSource::newest:
        return 'N';
    case BatchSource::random:
        return 'R';
    case BatchSource::weighted:
        return 'W';
    }
    return '?';
}

std::optional<BatchSource> parse_batch_source(std::string_view code) {
    if (code == "N") {
        return BatchSource::newest;
    }
    if (code == "R") {
        return BatchSource::random;
    }
    if (code == "W") {
        return BatchSource::weighted;
    }
    return std::nullopt;
}

std::vector<BatchSource> default_composition(MethodVariant variant) {
    switch (variant) {
    case MethodVariant::iwms:
        return {BatchSource::weighted, BatchSource::random};
    case MethodVariant::pseudo_label:
        return {BatchSource::random};
    case MethodVariant::naive:
    case MethodVariant::tta:
        break;
    }
    return {BatchSource::newest, BatchSource::random};
}

std::vector<BatchSource> effective_composition(const MethodSpec& spec) {
    return spec.composition.empty() ? default_composition(spec.variant) : spec.composition;
}

std::string method_label(const MethodSpec& spec) {
    if (!spec.name.empty()) {
        return spec.name;
    }
    std::string label(to_string(spec.variant));
    if (!spec.composition.empty() && spec.composition != default_composition(spec.variant)) {
        label += '[';
        for (const auto source : spec.composition) {
            label += to_code(source);
        }
        label += ']';
    }
    if (spec.iwms_mode == IwmsMode::single_shot) {
        label += "-single_shot";
    }
    return label;
}

void validate(const MethodSpec& spec) {
    if (spec.budget < 1) {
        throw ConfigError("method.budget: C must be >= 1");
    }
    if (!(spec.lambda >= 0.0 && spec.lambda <= 1.0)) {
        throw ConfigError("method.lambda: must lie in [0, 1]");
    }
    if (!std::isfinite(spec.epsilon) || spec.epsilon < 0.0) {
        throw ConfigError("method.epsilon: must be finite and >= 0");
    }
    if (effective_composition(spec).empty()) {
        throw ConfigError("method.composition: must name at least one of N, R, W");
    }
}

LearnerState make_learner(const ModelConfig& config, int input_dim, int num_classes, std::uint64_t seed,
                          std::size_t buffer_capacity) {
    auto model = make_classifier(config, input_dim, num_classes, seed);
    auto optimizer = make_optimizer(config, model.params());
    return LearnerState{std::move(model), std::move(optimizer), MemoryBuffer(buffer_capacity),
                        Rng(derive_seed(seed, "methods")), std::nullopt, std::nullopt};
}

namespace {

struct TrainingBatch {
    std::vector<FeatureVector> inputs;
    std::vector<int> labels;
    std::vector<int> label_origins;

    void add(const MemoryEntry& e) {
        inputs.push_back(e.features);
        labels.push_back(e.true_label);
        label_origins.push_back(e.origin_step);
    }
};

bool has_labels(const StepContext& ctx) { return !ctx.learner->buffer.empty(); }

TrainingBatch compose(StepContext& ctx, std::span<const BatchSource> recipe) {
    auto& learner = *ctx.learner;
    const std::size_t n = ctx.unlabeled.size();
    TrainingBatch batch;
    for (const auto source : recipe) {
        switch (source) {
        case BatchSource::newest:
            for (const auto& e : ctx.newest_labeled) {
                batch.add(e);
            }
            break;
        case BatchSource::random:
            for (const auto& e : learner.buffer.sample_random(n, learner.rng)) {
                batch.add(e);
            }
            break;
        case BatchSource::weighted:
            for (const auto& e : learner.buffer.iwms_select(ctx.prediction->features, ctx.prediction->labels, n,
                                                            learner.rng, ctx.spec->iwms_mode)) {
                batch.add(e);
            }
            break;
        }
    }
    return batch;
}

void apply_update(StepContext& ctx, TrainingBatch& batch, int units) {
    auto& learner = *ctx.learner;
    const auto result = cross_entropy_backward(learner.model, batch.inputs, batch.labels, *ctx.ledger, units);
    sgd_step(learner.optimizer, learner.model.params(), result.gradient);
    if (ctx.observer != nullptr) {
        ctx.observer->on_update(ctx.step, batch.label_origins, units);
    }
}

// `reserve` units are left for a non-supervised phase.
void supervised_passes(StepContext& ctx, int reserve) {
    const auto recipe = effective_composition(*ctx.spec);
    while (ctx.ledger->remaining() > reserve) {
        auto batch = compose(ctx, recipe);
        if (batch.inputs.empty()) {
            return;
        }
        apply_update(ctx, batch, 1);
    }
}

} // namespace

void step_naive(StepContext& ctx) {
    if (!has_labels(ctx)) {
        return;
    }
    supervised_passes(ctx, 0);
}

void step_iwms(StepContext& ctx) {
    // Same schedule as naive; the W component lives in the composition.
    step_naive(ctx);
}

void step_pseudo_label(StepContext& ctx, double lambda) {
    auto& learner = *ctx.learner;
    if (!has_labels(ctx)) {
        return;
    }
    if (!learner.surrogate) {
        learner.surrogate = learner.model;
    }
    std::vector<FeatureVector> unlabeled_inputs;
    unlabeled_inputs.reserve(ctx.unlabeled.size());
    for (const auto& s : ctx.unlabeled) {
        unlabeled_inputs.push_back(s.features);
    }
    const auto pseudo = predict(*learner.surrogate, unlabeled_inputs).labels;

    const auto recipe = effective_composition(*ctx.spec);
    while (ctx.ledger->remaining() >= 2) {
        auto batch = compose(ctx, recipe);
        batch.inputs.insert(batch.inputs.end(), unlabeled_inputs.begin(), unlabeled_inputs.end());
        batch.labels.insert(batch.labels.end(), pseudo.begin(), pseudo.end());
        apply_update(ctx, batch, 2);
    }
    if (ctx.ledger->remaining() == 1) {
        auto batch = compose(ctx, recipe);
        apply_update(ctx, batch, 1);
    }
    learner.surrogate->params() = momentum_clone_update(learner.surrogate->params(), learner.model.params(), lambda);
}

void step_tta(StepContext& ctx, double epsilon) {
    if (!has_labels(ctx)) {
        return;
    }
    supervised_passes(ctx, 1);
    std::vector<FeatureVector> inputs;
    inputs.reserve(ctx.unlabeled.size());
    for (const auto& s : ctx.unlabeled) {
        inputs.push_back(s.features);
    }
    ctx.learner->next_predictor = tta_adapt_clone(ctx.learner->model, inputs, epsilon, *ctx.ledger);
    if (ctx.observer != nullptr) {
        ctx.observer->on_update(ctx.step, {}, 1);
    }
}

void dispatch_step(StepContext& ctx) {
    switch (ctx.spec->variant) {
    case MethodVariant::naive:
        step_naive(ctx);
        return;
    case MethodVariant::iwms:
        step_iwms(ctx);
        return;
    case MethodVariant::pseudo_label:
        step_pseudo_label(ctx, ctx.spec->lambda);
        return;
    case MethodVariant::tta:
        step_tta(ctx, ctx.spec->epsilon);
        return;
    }
}

RunTrace run_method(StreamHandle& stream, const MethodSpec& spec, const ModelConfig& model_config,
                    const RunOptions& options) {
    validate(spec);
    const auto& config = stream.config();
    auto learner =
        make_learner(model_config, stream.dim(), stream.num_classes(), config.seed, options.buffer_capacity);
    if (spec.variant == MethodVariant::pseudo_label) {
        learner.surrogate = learner.model;
    }

    RunTrace trace;
    trace.config = RunEcho{config.delay, spec.budget, method_label(spec), config.seed};

    struct Pending {
        int step;
        std::vector<UnlabeledSample> samples;
        std::vector<FeatureVector> cached;
    };
    std::deque<Pending> awaiting_labels;
    std::vector<MemoryEntry> newest;

    while (!stream.done()) {
        auto tick = stream.next();
        const int t = tick.batch.step;

        // Predict before anything from step t can influence the parameters.
        std::vector<FeatureVector> inputs;
        inputs.reserve(tick.batch.samples.size());
        for (const auto& s : tick.batch.samples) {
            inputs.push_back(s.features);
        }
        const Classifier& predictor = learner.next_predictor ? *learner.next_predictor : learner.model;
        auto prediction = predict(predictor, inputs);
        learner.next_predictor.reset();
        if (options.observer != nullptr) {
            options.observer->on_prediction(t);
        }
        awaiting_labels.push_back(Pending{t, tick.batch.samples, prediction.features});

        newest.clear();
        if (tick.labels) {
            auto& pending = awaiting_labels.front();
            if (pending.step != tick.labels->origin_step || pending.samples.size() != tick.labels->pairs.size()) {
                throw StreamError("label batch for step " + std::to_string(tick.labels->origin_step) +
                                  " does not match the oldest unlabeled batch");
            }
            for (std::size_t i = 0; i < pending.samples.size(); ++i) {
                const auto& pair = tick.labels->pairs[i];
                if (pair.sample_id != pending.samples[i].id) {
                    throw StreamError("label for sample " + std::to_string(pair.sample_id) + " arrived out of order");
                }
                learner.buffer.insert_labeled(pending.samples[i], pair.label, pending.cached[i], t);
                newest.push_back(MemoryEntry{pending.samples[i].id, pending.samples[i].features, pair.label,
                                             pending.cached[i], t, pending.step});
            }
            if (options.observer != nullptr) {
                options.observer->on_labels(t, pending.step);
            }
            awaiting_labels.pop_front();
        }

        const int correct = EvaluationAccess::count_correct(stream, prediction.labels);
        update_online_accuracy(trace, t, correct, static_cast<int>(prediction.labels.size()));
        if (options.record_predictions) {
            trace.predictions.push_back(prediction.labels);
        }

        BudgetLedger ledger(spec.budget);
        StepContext ctx;
        ctx.step = t;
        ctx.newest_labeled = newest;
        ctx.unlabeled = tick.batch.samples;
        ctx.prediction = &prediction;
        ctx.learner = &learner;
        ctx.ledger = &ledger;
        ctx.spec = &spec;
        ctx.observer = options.observer;
        dispatch_step(ctx);
        if (options.observer != nullptr) {
            options.observer->on_step_end(t, ledger);
        }
    }

    if (!stream.validation_set().empty()) {
        trace.backward_transfer = backward_transfer(learner.model, stream.validation_set());
    }
    return trace;
}

} // namespace delaystream
