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
#include "delaystream/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>

#include "delaystream/buffer.hpp"
#include "delaystream/csv.hpp"
#include "delaystream/rng.hpp"

namespace delaystream {

namespace {

double loss_value(const Classifier& model, std::span<const FeatureVector> inputs, std::span<const int> labels,
                  LossKind loss) {
    return loss == LossKind::cross_entropy ? cross_entropy_gradient(model, inputs, labels).loss
                                           : entropy_gradient(model, inputs).loss;
}

} // namespace

GradientCheck check_gradient(const Classifier& model, std::span<const FeatureVector> inputs,
                             std::span<const int> labels, LossKind loss, double perturbation) {
    const auto analytic = loss == LossKind::cross_entropy ? cross_entropy_gradient(model, inputs, labels).gradient
                                                          : entropy_gradient(model, inputs).gradient;
    Classifier probe = model;
    GradientCheck result;
    for (std::size_t t = 0; t < probe.params().tensors.size(); ++t) {
        auto& values = probe.params().tensors[t].values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + perturbation;
            const double up = loss_value(probe, inputs, labels, loss);
            values[i] = saved - perturbation;
            const double down = loss_value(probe, inputs, labels, loss);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * perturbation);
            const double a = analytic.tensors[t].values[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            result.max_relative_error = std::max(result.max_relative_error, rel);
            ++result.parameters_checked;
        }
    }
    return result;
}

double chi_square_p_value(std::span<const std::size_t> observed, std::span<const double> expected_probabilities) {
    std::size_t total = 0;
    for (const auto c : observed) {
        total += c;
    }
    double statistic = 0.0;
    for (std::size_t j = 0; j < observed.size(); ++j) {
        const double expected = expected_probabilities[j] * static_cast<double>(total);
        const double diff = static_cast<double>(observed[j]) - expected;
        statistic += diff * diff / expected;
    }
    const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, statistic));
}

bool run_selftest(std::ostream& out, std::uint64_t seed) {
    bool all_ok = true;
    const auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        all_ok = all_ok && ok;
    };

    Rng rng(derive_seed(seed, "selftest"));
    for (const auto arch : {Architecture::linear, Architecture::mlp}) {
        for (const auto loss : {LossKind::cross_entropy, LossKind::entropy}) {
            double worst = 0.0;
            for (int trial = 0; trial < 25; ++trial) {
                const int dim = 2 + static_cast<int>(rng.index(7));
                const int hidden = 2 + static_cast<int>(rng.index(7));
                const int classes = 2 + static_cast<int>(rng.index(4));
                const int batch = 1 + static_cast<int>(rng.index(5));
                Classifier model(arch, dim, classes, hidden);
                model.initialize(rng.next_u64());
                std::vector<FeatureVector> inputs(static_cast<std::size_t>(batch), FeatureVector(dim));
                std::vector<int> labels(static_cast<std::size_t>(batch));
                for (auto& x : inputs) {
                    for (auto& v : x) {
                        v = rng.normal();
                    }
                }
                for (auto& y : labels) {
                    y = static_cast<int>(rng.index(static_cast<std::size_t>(classes)));
                }
                worst = std::max(worst, check_gradient(model, inputs, labels, loss).max_relative_error);
            }
            const auto name = std::string("gradient ") + std::string(to_string(arch)) +
                              (loss == LossKind::cross_entropy ? " cross_entropy" : " entropy");
            report(name, worst < 1e-4, "max relative error " + csv::format_double(worst));
        }
    }

    // IWMS draws against the clamped, normalized similarity weights.
    {
        MemoryBuffer buffer(8);
        const std::vector<FeatureVector> cached{{1.0, 0.0}, {0.6, 0.8}, {0.0, 1.0}, {-1.0, 0.2}};
        for (std::size_t j = 0; j < cached.size(); ++j) {
            buffer.insert_labeled(UnlabeledSample{static_cast<SampleId>(j), cached[j], 1}, 0, cached[j], 1);
        }
        const std::vector<FeatureVector> query{{0.8, 0.6}};
        const std::vector<int> predicted{0};
        Rng draw_rng(derive_seed(seed, "selftest_iwms"));
        constexpr std::size_t draws = 100000;
        std::vector<std::size_t> counts(cached.size(), 0);
        for (const auto& e : buffer.iwms_select(query, predicted, draws, draw_rng, IwmsMode::two_stage)) {
            ++counts[static_cast<std::size_t>(e.sample_id)];
        }
        std::vector<double> sims;
        for (const auto& c : cached) {
            sims.push_back(cosine(query[0], c));
        }
        const auto expected = selection_probabilities(sims);
        // The near-zero-weight candidate is merged into its neighbour so every
        // chi-square cell has a usable expected count.
        std::vector<std::size_t> merged{counts[0], counts[1], counts[2] + counts[3]};
        std::vector<double> merged_p{expected[0], expected[1], expected[2] + expected[3]};
        const double p = chi_square_p_value(merged, merged_p);
        report("iwms multinomial", p > 1e-3, "chi-square p = " + csv::format_double(p));

        Rng uniform_rng(derive_seed(seed, "selftest_random"));
        std::vector<std::size_t> uniform_counts(cached.size(), 0);
        for (const auto& e : buffer.sample_random(draws, uniform_rng)) {
            ++uniform_counts[static_cast<std::size_t>(e.sample_id)];
        }
        const std::vector<double> quarter(cached.size(), 0.25);
        const double pu = chi_square_p_value(uniform_counts, quarter);
        report("random memory sampling", pu > 1e-3, "chi-square p = " + csv::format_double(pu));
    }
    return all_ok;
}

} // namespace delaystream
