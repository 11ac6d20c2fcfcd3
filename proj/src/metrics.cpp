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
#include "delaystream/metrics.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "delaystream/csv.hpp"

namespace delaystream {

void update_online_accuracy(RunTrace& trace, int t, int correct, int total) {
    if (!trace.per_step.empty() && t <= trace.per_step.back().t) {
        throw std::invalid_argument("update_online_accuracy: step " + std::to_string(t) + " does not follow step " +
                                    std::to_string(trace.per_step.back().t));
    }
    if (total < 1 || correct < 0 || correct > total) {
        throw std::invalid_argument("update_online_accuracy: need 0 <= correct <= total and total >= 1");
    }
    trace.cumulative_correct += correct;
    trace.cumulative_total += total;
    const double acc = static_cast<double>(trace.cumulative_correct) / static_cast<double>(trace.cumulative_total);
    trace.per_step.push_back(StepRecord{t, correct, total, acc});
    trace.final_online_accuracy = acc;
}

namespace {

void require_fraction(double value, const char* what) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::domain_error(std::string(what) + " must be a fraction in [0, 1], got " + csv::format_double(value));
    }
}

} // namespace

double compute_gap(double acc_naive_d, double acc_naive_0) {
    require_fraction(acc_naive_d, "acc_naive_d");
    require_fraction(acc_naive_0, "acc_naive_0");
    return acc_naive_d - acc_naive_0;
}

std::optional<double> compute_recovery(double acc_method_d, double acc_naive_d, double gap) {
    require_fraction(acc_method_d, "acc_method_d");
    require_fraction(acc_naive_d, "acc_naive_d");
    if (gap == 0.0 || !std::isfinite(gap)) {
        return std::nullopt;
    }
    return (acc_method_d - acc_naive_d) / std::abs(gap);
}

double backward_transfer(const Classifier& model, std::span<const Sample> validation) {
    if (validation.empty()) {
        throw std::invalid_argument("backward_transfer: validation set is empty");
    }
    std::vector<FeatureVector> inputs;
    inputs.reserve(validation.size());
    for (const auto& s : validation) {
        inputs.push_back(s.features);
    }
    const auto prediction = predict(model, inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
        correct += prediction.labels[i] == validation[i].true_label ? 1U : 0U;
    }
    return static_cast<double>(correct) / static_cast<double>(validation.size());
}

std::vector<std::pair<int, double>> per_batch_accuracy_trace(const RunTrace& trace) {
    std::vector<std::pair<int, double>> out;
    out.reserve(trace.per_step.size());
    for (const auto& r : trace.per_step) {
        out.emplace_back(r.t, static_cast<double>(r.correct) / static_cast<double>(r.total));
    }
    return out;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
    out << "t,correct,total,online_acc,batch_acc\n";
    for (const auto& r : trace.per_step) {
        out << r.t << ',' << r.correct << ',' << r.total << ',' << csv::format_double(r.online_accuracy) << ','
            << csv::format_double(static_cast<double>(r.correct) / static_cast<double>(r.total)) << '\n';
    }
}

nlohmann::json summary_json(const RunTrace& trace) {
    nlohmann::json j;
    j["d"] = trace.config.delay;
    j["C"] = trace.config.budget;
    j["method"] = trace.config.method;
    j["seed"] = trace.config.seed;
    j["final_online_acc"] = trace.final_online_accuracy;
    j["backward_transfer"] = trace.backward_transfer ? nlohmann::json(*trace.backward_transfer) : nlohmann::json();
    return j;
}

int EvaluationAccess::count_correct(const StreamHandle& stream, std::span<const int> predictions) {
    const auto truth = stream.current_labels(EvaluationKey{});
    if (truth.size() != predictions.size()) {
        throw std::invalid_argument("count_correct: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(truth.size()) + " samples");
    }
    int correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += truth[i] == predictions[i] ? 1 : 0;
    }
    return correct;
}

} // namespace delaystream
