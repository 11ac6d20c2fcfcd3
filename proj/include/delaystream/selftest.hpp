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
#include <span>

#include "delaystream/model.hpp"

namespace delaystream {

/// Largest relative error between analytic (a) and central-difference (n)
/// gradients, |a - n| / max(|a|, |n|, 1e-6). The floor keeps round-off on
/// near-zero components from dominating.
struct GradientCheck {
    double max_relative_error = 0.0;
    std::size_t parameters_checked = 0;
};

enum class LossKind { cross_entropy, entropy };

GradientCheck check_gradient(const Classifier& model, std::span<const FeatureVector> inputs,
                             std::span<const int> labels, LossKind loss, double perturbation = 1e-5);

/// Upper-tail p-value of Pearson's chi-square statistic for observed counts
/// against expected probabilities.
double chi_square_p_value(std::span<const std::size_t> observed, std::span<const double> expected_probabilities);

/// Runs the gradient and sampler checks, printing one line per check.
/// Returns true when all pass.
bool run_selftest(std::ostream& out, std::uint64_t seed = 2024);

} // namespace delaystream
