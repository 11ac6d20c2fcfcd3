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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delaystream/methods.hpp"
#include "delaystream/metrics.hpp"
#include "delaystream/model.hpp"
#include "delaystream/stream.hpp"

namespace delaystream {

/// A sweep over (method x delay x budget x seed).
struct ExperimentPlan {
    StreamConfig stream;
    ModelConfig model;
    std::size_t buffer_capacity = kDefaultBufferCapacity;
    std::vector<MethodSpec> methods;
    std::vector<int> delays{0};
    std::vector<int> budgets{1};
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs";
};

/// One fully resolved run of a plan.
struct RunSpec {
    StreamConfig stream; ///< delay and seed filled in
    ModelConfig model;
    std::size_t buffer_capacity = kDefaultBufferCapacity;
    MethodSpec method; ///< budget filled in
    std::string id;
};

/// Canonical JSON of every field that influences a run.
nlohmann::json canonical_json(const RunSpec& run);

/// 16 hex digits of FNV-1a over the canonical JSON.
std::string run_id(const RunSpec& run);

/// Cross product in plan order: method, delay, budget, seed (seed fastest).
std::vector<RunSpec> expand_plan(const ExperimentPlan& plan);

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError with a path such as `$.delays[0]`. Relative generator paths
/// resolve against `base_dir`.
ExperimentPlan parse_plan(const nlohmann::json& config, const std::filesystem::path& base_dir = {});
ExperimentPlan parse_config(const std::filesystem::path& path);

/// Replaces every seed with DELAYSTREAM_SEED_OVERRIDE when set. Throws
/// ConfigError when the variable is not an integer.
void apply_seed_override(ExperimentPlan& plan);

/// Executes one run in memory.
RunTrace execute_run(const RunSpec& run, TrainingObserver* observer = nullptr);

struct RunOutcome {
    RunSpec spec;
    enum class Status { ok, skipped, failed } status = Status::ok;
    std::string error;
    double final_online_accuracy = 0.0;
    std::optional<double> backward_transfer;
};

struct AggregateRow {
    std::string method;
    int delay = 0;
    int budget = 1;
    int runs = 0;
    double mean_final_accuracy = 0.0;
    double stdev_final_accuracy = 0.0;
    std::optional<double> mean_backward_transfer;
    std::optional<double> stdev_backward_transfer;
};

struct PlanSummary {
    std::vector<RunOutcome> runs;
    std::vector<AggregateRow> aggregate;

    [[nodiscard]] std::size_t failures() const;
};

struct RunPlanOptions {
    int workers = 1;
    bool overwrite = false;
    std::ostream* log = nullptr; ///< progress lines when set
};

/// Writes `<output_dir>/<run-id>/{trace.csv,summary.json}` per run, then
/// `aggregate.csv` and `aggregate_stats.csv`. Failed runs are recorded
/// with status "error" and the plan continues.
PlanSummary run_plan(const ExperimentPlan& plan, const RunPlanOptions& options = {});

/// Mean and sample standard deviation per (method, d, C), in first-seen order.
std::vector<AggregateRow> aggregate_outcomes(const std::vector<RunOutcome>& runs);

struct ReportRow {
    std::string method;
    int delay = 0;
    int budget = 1;
    int runs = 0;
    double mean_final_accuracy = 0.0;
    std::optional<double> gap;      ///< G_d of naive at (d, C)
    std::optional<double> recovery; ///< R_d of this method at (d, C)
};

struct Report {
    std::vector<ReportRow> rows;
    /// Differences between aggregate.csv and the per-run summaries.
    std::vector<std::string> inconsistencies;
};

/// Re-derives accuracy gaps and recoveries from the `summary.json` files in
/// `output_dir`. Read-only.
Report build_report(const std::filesystem::path& output_dir);
void write_report_csv(std::ostream& out, const Report& report);

} // namespace delaystream
