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
#include "delaystream/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "delaystream/csv.hpp"
#include "delaystream/errors.hpp"
#include "delaystream/rng.hpp"

namespace delaystream {

Parameters Parameters::zeros_like() const {
    Parameters out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
        out.tensors.emplace_back(t.name, t.rows, t.cols);
    }
    return out;
}

bool Parameters::same_shape(const Parameters& other) const {
    if (tensors.size() != other.tensors.size()) {
        return false;
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].name != other.tensors[i].name || tensors[i].rows != other.tensors[i].rows ||
            tensors[i].cols != other.tensors[i].cols) {
            return false;
        }
    }
    return true;
}

std::size_t Parameters::size() const {
    std::size_t total = 0;
    for (const auto& t : tensors) {
        total += t.values.size();
    }
    return total;
}

std::string_view to_string(Architecture arch) { return arch == Architecture::linear ? "linear" : "mlp"; }

std::optional<Architecture> parse_architecture(std::string_view name) {
    if (name == "linear") {
        return Architecture::linear;
    }
    if (name == "mlp") {
        return Architecture::mlp;
    }
    return std::nullopt;
}

Classifier::Classifier(Architecture arch, int input_dim, int num_classes, int hidden)
    : arch_(arch), input_dim_(input_dim), num_classes_(num_classes), hidden_(arch == Architecture::mlp ? hidden : 0) {
    if (input_dim < 1 || num_classes < 2 || (arch == Architecture::mlp && hidden < 1)) {
        throw ConfigError("classifier: need input_dim >= 1, num_classes >= 2 and hidden >= 1 for mlp");
    }
    if (arch_ == Architecture::linear) {
        params_.tensors.emplace_back("w", num_classes_, input_dim_);
        params_.tensors.emplace_back("b", num_classes_, 1);
    } else {
        params_.tensors.emplace_back("w1", hidden_, input_dim_);
        params_.tensors.emplace_back("b1", hidden_, 1);
        params_.tensors.emplace_back("w2", num_classes_, hidden_);
        params_.tensors.emplace_back("b2", num_classes_, 1);
    }
}

void Classifier::initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "model_init"));
    for (auto& t : params_.tensors) {
        if (t.cols == 1 && t.name.front() == 'b') {
            std::fill(t.values.begin(), t.values.end(), 0.0);
            continue;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
        for (auto& v : t.values) {
            v = rng.uniform(-bound, bound);
        }
    }
}

namespace {

void affine(const Tensor& w, const Tensor& b, std::span<const double> x, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(w.rows), 0.0);
    for (int r = 0; r < w.rows; ++r) {
        double acc = b.values[static_cast<std::size_t>(r)];
        const double* row = &w.values[static_cast<std::size_t>(r) * w.cols];
        for (int c = 0; c < w.cols; ++c) {
            acc += row[c] * x[static_cast<std::size_t>(c)];
        }
        out[static_cast<std::size_t>(r)] = acc;
    }
}

void check_inputs(const Classifier& model, std::span<const FeatureVector> inputs) {
    for (const auto& x : inputs) {
        if (static_cast<int>(x.size()) != model.input_dim()) {
            throw ShapeError("classifier expects " + std::to_string(model.input_dim()) + " features, got " +
                             std::to_string(x.size()));
        }
    }
}

std::vector<double> log_softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (const double z : logits) {
        sum += std::exp(z - peak);
    }
    const double log_norm = peak + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = logits[k] - log_norm;
    }
    return out;
}

// Accumulates d(loss)/d(theta) for one sample given d(loss)/d(logits).
void backprop(const Classifier& model, std::span<const double> x, std::span<const double> features,
              std::span<const double> dlogits, Parameters& grad) {
    const auto& p = model.params().tensors;
    const std::size_t head = model.arch() == Architecture::linear ? 0 : 2;
    Tensor& gw = grad.tensors[head];
    Tensor& gb = grad.tensors[head + 1];
    for (int k = 0; k < gw.rows; ++k) {
        const double dz = dlogits[static_cast<std::size_t>(k)];
        gb.values[static_cast<std::size_t>(k)] += dz;
        double* row = &gw.values[static_cast<std::size_t>(k) * gw.cols];
        for (int j = 0; j < gw.cols; ++j) {
            row[j] += dz * features[static_cast<std::size_t>(j)];
        }
    }
    if (model.arch() == Architecture::linear) {
        return;
    }
    const Tensor& w2 = p[2];
    Tensor& gw1 = grad.tensors[0];
    Tensor& gb1 = grad.tensors[1];
    for (int j = 0; j < w2.cols; ++j) {
        double dh = 0.0;
        for (int k = 0; k < w2.rows; ++k) {
            dh += w2.at(k, j) * dlogits[static_cast<std::size_t>(k)];
        }
        const double h = features[static_cast<std::size_t>(j)];
        const double da = dh * (1.0 - h * h);
        gb1.values[static_cast<std::size_t>(j)] += da;
        double* row = &gw1.values[static_cast<std::size_t>(j) * gw1.cols];
        for (int c = 0; c < gw1.cols; ++c) {
            row[c] += da * x[static_cast<std::size_t>(c)];
        }
    }
}

} // namespace

void Classifier::forward(std::span<const double> x, std::vector<double>& features, std::vector<double>& logits) const {
    if (arch_ == Architecture::linear) {
        features.assign(x.begin(), x.end());
        affine(params_.tensors[0], params_.tensors[1], x, logits);
        return;
    }
    affine(params_.tensors[0], params_.tensors[1], x, features);
    for (auto& v : features) {
        v = std::tanh(v);
    }
    affine(params_.tensors[2], params_.tensors[3], features, logits);
}

Classifier make_classifier(const ModelConfig& config, int input_dim, int num_classes, std::uint64_t seed) {
    Classifier model(config.arch, input_dim, num_classes, config.hidden);
    model.initialize(seed);
    return model;
}

std::vector<double> softmax(std::span<const double> logits) {
    auto out = log_softmax(logits);
    for (auto& v : out) {
        v = std::exp(v);
    }
    return out;
}

int argmax(std::span<const double> values) {
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

Prediction predict(const Classifier& model, std::span<const FeatureVector> inputs) {
    check_inputs(model, inputs);
    Prediction out;
    out.labels.reserve(inputs.size());
    out.probabilities.reserve(inputs.size());
    out.features.reserve(inputs.size());
    std::vector<double> features;
    std::vector<double> logits;
    for (const auto& x : inputs) {
        model.forward(x, features, logits);
        out.labels.push_back(argmax(logits));
        out.probabilities.push_back(softmax(logits));
        out.features.push_back(features);
    }
    return out;
}

BudgetLedger::BudgetLedger(int budget) : budget_(budget) {
    if (budget < 1) {
        throw ConfigError("budget: C must be a positive integer");
    }
}

void BudgetLedger::charge(int units) {
    if (units < 0 || units > remaining()) {
        throw BudgetExceeded("budget overspend: " + std::to_string(used_) + " + " + std::to_string(units) + " > " +
                             std::to_string(budget_));
    }
    used_ += units;
}

LossAndGradient cross_entropy_gradient(const Classifier& model, std::span<const FeatureVector> inputs,
                                       std::span<const int> labels) {
    check_inputs(model, inputs);
    if (inputs.size() != labels.size() || inputs.empty()) {
        throw ShapeError("cross_entropy: need one label per input and a non-empty batch");
    }
    LossAndGradient out{0.0, model.params().zeros_like()};
    const double scale = 1.0 / static_cast<double>(inputs.size());
    std::vector<double> features;
    std::vector<double> logits;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= model.num_classes()) {
            throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range");
        }
        model.forward(inputs[i], features, logits);
        const auto log_p = log_softmax(logits);
        out.loss -= log_p[static_cast<std::size_t>(y)] * scale;
        std::vector<double> dlogits(log_p.size());
        for (std::size_t k = 0; k < log_p.size(); ++k) {
            dlogits[k] = (std::exp(log_p[k]) - (static_cast<int>(k) == y ? 1.0 : 0.0)) * scale;
        }
        backprop(model, inputs[i], features, dlogits, out.gradient);
    }
    return out;
}

LossAndGradient entropy_gradient(const Classifier& model, std::span<const FeatureVector> inputs) {
    check_inputs(model, inputs);
    if (inputs.empty()) {
        throw ShapeError("entropy: empty batch");
    }
    LossAndGradient out{0.0, model.params().zeros_like()};
    const double scale = 1.0 / static_cast<double>(inputs.size());
    std::vector<double> features;
    std::vector<double> logits;
    for (const auto& x : inputs) {
        model.forward(x, features, logits);
        const auto log_p = log_softmax(logits);
        double entropy = 0.0;
        std::vector<double> p(log_p.size());
        for (std::size_t k = 0; k < log_p.size(); ++k) {
            p[k] = std::exp(log_p[k]);
            entropy -= p[k] * log_p[k];
        }
        out.loss += entropy * scale;
        // dH/dz_k = -p_k (log p_k + H)
        std::vector<double> dlogits(log_p.size());
        for (std::size_t k = 0; k < log_p.size(); ++k) {
            dlogits[k] = -p[k] * (log_p[k] + entropy) * scale;
        }
        backprop(model, x, features, dlogits, out.gradient);
    }
    return out;
}

LossAndGradient cross_entropy_backward(const Classifier& model, std::span<const FeatureVector> inputs,
                                       std::span<const int> labels, BudgetLedger& ledger, int units) {
    ledger.charge(units);
    return cross_entropy_gradient(model, inputs, labels);
}

LossAndGradient entropy_backward(const Classifier& model, std::span<const FeatureVector> inputs,
                                 BudgetLedger& ledger, int units) {
    ledger.charge(units);
    return entropy_gradient(model, inputs);
}

OptimizerState make_optimizer(const ModelConfig& config, const Parameters& shape) {
    return OptimizerState{config.learning_rate, config.momentum, config.weight_decay, shape.zeros_like()};
}

void sgd_step(OptimizerState& state, Parameters& theta, const Parameters& gradient) {
    if (!theta.same_shape(gradient) || !theta.same_shape(state.velocity)) {
        throw ShapeError("sgd_step: parameter, gradient and velocity shapes differ");
    }
    for (std::size_t t = 0; t < theta.tensors.size(); ++t) {
        auto& w = theta.tensors[t].values;
        auto& v = state.velocity.tensors[t].values;
        const auto& g = gradient.tensors[t].values;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double decayed = g[i] + state.weight_decay * w[i];
            v[i] = state.momentum * v[i] + decayed;
            w[i] -= state.learning_rate * v[i];
        }
    }
}

Parameters momentum_clone_update(const Parameters& phi, const Parameters& theta, double lambda) {
    if (!phi.same_shape(theta)) {
        throw ShapeError("momentum_clone_update: surrogate and model shapes differ");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("momentum_clone_update: lambda must lie in [0, 1]");
    }
    Parameters out = phi;
    for (std::size_t t = 0; t < out.tensors.size(); ++t) {
        auto& o = out.tensors[t].values;
        const auto& th = theta.tensors[t].values;
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] = lambda * o[i] + (1.0 - lambda) * th[i];
        }
    }
    return out;
}

Classifier tta_adapt_clone(const Classifier& model, std::span<const FeatureVector> inputs, double epsilon,
                           BudgetLedger& ledger) {
    const auto step = entropy_backward(model, inputs, ledger);
    Classifier clone = model;
    auto& phi = clone.params();
    for (std::size_t t = 0; t < phi.tensors.size(); ++t) {
        auto& w = phi.tensors[t].values;
        const auto& g = step.gradient.tensors[t].values;
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] -= epsilon * g[i];
        }
    }
    return clone;
}

void write_checkpoint(std::ostream& out, const Parameters& params) {
    out << "name,row,col,value\n";
    for (const auto& t : params.tensors) {
        for (int r = 0; r < t.rows; ++r) {
            for (int c = 0; c < t.cols; ++c) {
                out << t.name << ',' << r << ',' << c << ',' << csv::format_double(t.at(r, c)) << '\n';
            }
        }
    }
}

void read_checkpoint(std::istream& in, Parameters& params) {
    std::string line;
    if (!std::getline(in, line) || csv::chomp(line) != "name,row,col,value") {
        throw StreamError("checkpoint: missing header name,row,col,value");
    }
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        const auto record = csv::chomp(line);
        if (record.empty()) {
            continue;
        }
        const auto fields = csv::split(record);
        if (fields.size() != 4) {
            throw StreamError("checkpoint: expected 4 fields in '" + std::string(record) + "'");
        }
        auto tensor = std::find_if(params.tensors.begin(), params.tensors.end(),
                                   [&](const Tensor& t) { return t.name == fields[0]; });
        const auto row = csv::parse_int(fields[1]);
        const auto col = csv::parse_int(fields[2]);
        const auto value = csv::parse_double(fields[3]);
        if (tensor == params.tensors.end() || !row || !col || !value || *row < 0 || *row >= tensor->rows || *col < 0 ||
            *col >= tensor->cols) {
            throw StreamError("checkpoint: bad entry '" + std::string(record) + "'");
        }
        tensor->at(static_cast<int>(*row), static_cast<int>(*col)) = *value;
        ++seen;
    }
    if (seen != params.size()) {
        throw StreamError("checkpoint: " + std::to_string(seen) + " entries for " + std::to_string(params.size()) +
                          " parameters");
    }
}

} // namespace delaystream
