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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "delaystream/buffer.hpp"
#include "delaystream/metrics.hpp"
#include "delaystream/model.hpp"
#include "delaystream/rng.hpp"
#include "delaystream/stream.hpp"

namespace delaystream {

enum class MethodVariant { naive, iwms, pseudo_label, tta };

/// Mini-batch components: Newest labeled batch, Random memory batch,
/// importance-Weighted memory batch.
enum class BatchSource { newest, random, weighted };

std::string_view to_string(MethodVariant variant);
std::optional<MethodVariant> parse_method_variant(std::string_view name);
char to_code(BatchSource source);
std::optional<BatchSource> parse_batch_source(std::string_view code);

inline constexpr double kDefaultSurrogateMomentum = 0.99;
inline constexpr double kDefaultTtaStepSize = 0.001;

struct MethodSpec {
    MethodVariant variant = MethodVariant::naive;
    /// Supervised mini-batch recipe; empty means the variant's default
    /// (naive/tta: N+R, iwms: W+R, pseudo_label: R plus the pseudo-labeled batch).
    std::vector<BatchSource> composition;
    int budget = 1;
    IwmsMode iwms_mode = IwmsMode::two_stage;
    double lambda = kDefaultSurrogateMomentum; ///< pseudo_label surrogate momentum
    double epsilon = kDefaultTtaStepSize;      ///< tta step size
    std::string name;                          ///< optional display label
};

std::vector<BatchSource> default_composition(MethodVariant variant);
std::vector<BatchSource> effective_composition(const MethodSpec& spec);

/// Display label, e.g. "naive", "iwms", "naive[RR]", "iwms-single_shot". Never contains a comma.
std::string method_label(const MethodSpec& spec);

/// Throws ConfigError on out-of-range budget, lambda, epsilon or an empty composition.
void validate(const MethodSpec& spec);

/// Hooks for instrumentation. Default implementations do nothing.
class TrainingObserver {
public:
    virtual ~TrainingObserver() = default;
    /// Predictions for `step` were recorded.
    virtual void on_prediction(int /*step*/) {}
    /// True labels of batch `origin_step` were consumed at `step`.
    virtual void on_labels(int /*step*/, int /*origin_step*/) {}
    /// One parameter update at `step`; lists the origin step of every
    /// ground-truth label it reads (pseudo-labels are not listed).
    virtual void on_update(int /*step*/, std::span<const int> /*label_origin_steps*/, int /*units*/) {}
    virtual void on_step_end(int /*step*/, const BudgetLedger& /*ledger*/) {}
};

/// Everything a run mutates. One owner, one thread.
struct LearnerState {
    Classifier model;
    OptimizerState optimizer;
    MemoryBuffer buffer;
    Rng rng;
    std::optional<SurrogateModel> surrogate;   ///< pseudo_label g_phi
    std::optional<Classifier> next_predictor;  ///< tta clone used for the next prediction only
};

LearnerState make_learner(const ModelConfig& config, int input_dim, int num_classes, std::uint64_t seed,
                          std::size_t buffer_capacity);

/// Inputs of one update phase.
struct StepContext {
    int step = 0;
    /// Batch whose labels arrived this step; empty before the first delivery.
    std::span<const MemoryEntry> newest_labeled;
    std::span<const UnlabeledSample> unlabeled;
    /// Predicted labels and penultimate features of `unlabeled`.
    const Prediction* prediction = nullptr;
    LearnerState* learner = nullptr;
    BudgetLedger* ledger = nullptr;
    const MethodSpec* spec = nullptr;
    TrainingObserver* observer = nullptr;
};

void step_naive(StepContext& ctx);
void step_iwms(StepContext& ctx);
void step_pseudo_label(StepContext& ctx, double lambda);
void step_tta(StepContext& ctx, double epsilon);
void dispatch_step(StepContext& ctx);

struct RunOptions {
    std::size_t buffer_capacity = kDefaultBufferCapacity;
    TrainingObserver* observer = nullptr;
    bool record_predictions = true;
};

/// Runs the delayed-label protocol to the stream horizon: reveal, predict,
/// consume delayed labels, evaluate, update. Budget overspend propagates as
/// BudgetExceeded and aborts the run.
RunTrace run_method(StreamHandle& stream, const MethodSpec& spec, const ModelConfig& model_config,
                    const RunOptions& options = {});

} // namespace delaystream
