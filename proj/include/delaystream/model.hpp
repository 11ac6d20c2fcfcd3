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
#include <string_view>
#include <vector>

#include "delaystream/stream.hpp"

namespace delaystream {

/// Dense row-major matrix with a name, the unit of parameter storage.
struct Tensor {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::string tensor_name, int r, int c)
        : name(std::move(tensor_name)), rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    [[nodiscard]] double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

    bool operator==(const Tensor&) const = default;
};

/// An ordered set of named tensors. Parameters, gradients and optimizer
/// velocities all share this layout.
struct Parameters {
    std::vector<Tensor> tensors;

    [[nodiscard]] Parameters zeros_like() const;
    [[nodiscard]] bool same_shape(const Parameters& other) const;
    [[nodiscard]] std::size_t size() const;

    /// Visits every scalar in layout order.
    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& t : tensors) {
            for (auto& v : t.values) {
                fn(v);
            }
        }
    }

    bool operator==(const Parameters&) const = default;
};

enum class Architecture { linear, mlp };

std::string_view to_string(Architecture arch);
std::optional<Architecture> parse_architecture(std::string_view name);

struct ModelConfig {
    Architecture arch = Architecture::mlp;
    int hidden = 16;
    double learning_rate = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-5;
};

/// linear: logits = W x + b, h(x) = x.
/// mlp:    h(x) = tanh(W1 x + b1), logits = W2 h(x) + b2.
class Classifier {
public:
    Classifier() = default;
    Classifier(Architecture arch, int input_dim, int num_classes, int hidden = 0);

    [[nodiscard]] Architecture arch() const { return arch_; }
    [[nodiscard]] int input_dim() const { return input_dim_; }
    [[nodiscard]] int num_classes() const { return num_classes_; }
    [[nodiscard]] int hidden() const { return hidden_; }
    [[nodiscard]] int feature_dim() const { return arch_ == Architecture::linear ? input_dim_ : hidden_; }

    Parameters& params() { return params_; }
    [[nodiscard]] const Parameters& params() const { return params_; }

    /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
    void initialize(std::uint64_t seed);

    /// Penultimate features h(x) and logits for one input.
    void forward(std::span<const double> x, std::vector<double>& features, std::vector<double>& logits) const;

private:
    Architecture arch_ = Architecture::linear;
    int input_dim_ = 0;
    int num_classes_ = 0;
    int hidden_ = 0;
    Parameters params_;
};

/// Surrogate g_phi: a classifier kept shape-compatible with the main model.
using SurrogateModel = Classifier;

Classifier make_classifier(const ModelConfig& config, int input_dim, int num_classes, std::uint64_t seed);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Index of the largest entry, lowest index on ties.
int argmax(std::span<const double> values);

struct Prediction {
    std::vector<int> labels;
    std::vector<std::vector<double>> probabilities;
    std::vector<FeatureVector> features; ///< penultimate activations, cached by the replay memory
};

/// Throws ShapeError on a feature dimension mismatch.
Prediction predict(const Classifier& model, std::span<const FeatureVector> inputs);

/// Backward-pass units available in one stream step.
class BudgetLedger {
public:
    explicit BudgetLedger(int budget);

    [[nodiscard]] int budget() const { return budget_; }
    [[nodiscard]] int used() const { return used_; }
    [[nodiscard]] int remaining() const { return budget_ - used_; }

    /// Throws BudgetExceeded without mutating when `units` would overspend.
    void charge(int units);
    void reset() { used_ = 0; }

private:
    int budget_;
    int used_ = 0;
};

struct LossAndGradient {
    double loss = 0.0;
    Parameters gradient;
};

/// Mean cross-entropy over the batch and its gradient. Does not touch any budget.
LossAndGradient cross_entropy_gradient(const Classifier& model, std::span<const FeatureVector> inputs,
                                       std::span<const int> labels);

/// Mean prediction entropy over the batch and its gradient.
LossAndGradient entropy_gradient(const Classifier& model, std::span<const FeatureVector> inputs);

/// Charged variants: one backward pass costs `units` (1 unless the caller's
/// accounting says otherwise). The ledger is charged before any work.
LossAndGradient cross_entropy_backward(const Classifier& model, std::span<const FeatureVector> inputs,
                                       std::span<const int> labels, BudgetLedger& ledger, int units = 1);
LossAndGradient entropy_backward(const Classifier& model, std::span<const FeatureVector> inputs,
                                 BudgetLedger& ledger, int units = 1);

struct OptimizerState {
    double learning_rate = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    Parameters velocity;
};

OptimizerState make_optimizer(const ModelConfig& config, const Parameters& shape);

/// g' = g + wd*theta; v = m*v + g'; theta -= lr*v.
void sgd_step(OptimizerState& state, Parameters& theta, const Parameters& gradient);

/// Elementwise lambda*phi + (1 - lambda)*theta.
Parameters momentum_clone_update(const Parameters& phi, const Parameters& theta, double lambda);

/// phi = theta - epsilon * grad(mean entropy on the batch). theta is untouched.
Classifier tta_adapt_clone(const Classifier& model, std::span<const FeatureVector> inputs, double epsilon,
                           BudgetLedger& ledger);

/// `name,row,col,value` rows, one per scalar.
void write_checkpoint(std::ostream& out, const Parameters& params);
/// Reads into `params`, whose layout must already match the file.
void read_checkpoint(std::istream& in, Parameters& params);

} // namespace delaystream
