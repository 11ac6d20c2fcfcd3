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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "delaystream/model.hpp"
#include "delaystream/stream.hpp"

namespace delaystream {

struct StepRecord {
    int t = 0;
    int correct = 0;
    int total = 0;
    double online_accuracy = 0.0;
};

struct RunEcho {
    int delay = 0;
    int budget = 1;
    std::string method;
    std::uint64_t seed = 0;
};

/// Prequential record of one run. All accuracies are fractions in [0, 1].
struct RunTrace {
    std::vector<StepRecord> per_step;
    double final_online_accuracy = 0.0;
    RunEcho config;
    std::optional<double> backward_transfer;
    /// Predicted labels per step, in batch order.
    std::vector<std::vector<int>> predictions;

    long long cumulative_correct = 0;
    long long cumulative_total = 0;
};

/// Appends step t with the cumulative (never windowed) online accuracy.
/// Throws std::invalid_argument if t does not strictly increase or counts are inconsistent.
void update_online_accuracy(RunTrace& trace, int t, int correct, int total);

/// G_d = Acc_d(naive) - Acc_0(naive). Fractions only; throws std::domain_error outside [0, 1].
double compute_gap(double acc_naive_d, double acc_naive_0);

/// R_d = (Acc_d(method) - Acc_d(naive)) / |G_d|; absent when G_d == 0.
std::optional<double> compute_recovery(double acc_method_d, double acc_naive_d, double gap);

/// Top-1 accuracy of `model` over the held-out validation set. Throws
/// std::invalid_argument when the set is empty.
double backward_transfer(const Classifier& model, std::span<const Sample> validation);

/// Non-cumulative per-step accuracy (correct / total).
std::vector<std::pair<int, double>> per_batch_accuracy_trace(const RunTrace& trace);

/// CSV `t,correct,total,online_acc,batch_acc`.
void write_trace_csv(std::ostream& out, const RunTrace& trace);

/// `{d, C, method, seed, final_online_acc, backward_transfer}`; a missing
/// backward transfer is written as null.
nlohmann::json summary_json(const RunTrace& trace);

/// The evaluation harness' privileged path to ground truth. Learners never
/// receive labels through it, only the count of correct predictions.
class EvaluationAccess {
public:
    /// Correct predictions on the batch most recently revealed by `stream`.
    static int count_correct(const StreamHandle& stream, std::span<const int> predictions);
};

} // namespace delaystream
