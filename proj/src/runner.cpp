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
#include "delaystream/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "delaystream/csv.hpp"
#include "delaystream/errors.hpp"
#include "delaystream/rng.hpp"

namespace delaystream {

namespace {

using nlohmann::json;

// Reads one JSON object, rejecting keys it was never asked about.
class ObjectReader {
public:
    ObjectReader(const json& value, std::string path) : value_(value), path_(std::move(path)) {
        if (!value_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    [[nodiscard]] std::string at(const std::string& key) const { return path_ + "." + key; }

    const json* find(const std::string& key) {
        known_.insert(key);
        const auto it = value_.find(key);
        return it == value_.end() ? nullptr : &*it;
    }

    const json& require(const std::string& key) {
        const auto* v = find(key);
        if (v == nullptr) {
            throw ConfigError(at(key) + ": missing required key");
        }
        return *v;
    }

    void read(const std::string& key, int& out) {
        if (const auto* v = find(key)) {
            out = as_int(*v, at(key));
        }
    }

    void read(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            out = as_double(*v, at(key));
        }
    }

    void read(const std::string& key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            out = as_u64(*v, at(key));
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            out = as_string(*v, at(key));
        }
    }

    void finish() const {
        for (const auto& [key, unused] : value_.items()) {
            if (!known_.contains(key)) {
                throw ConfigError(at(key) + ": unknown key");
            }
        }
    }

    static int as_int(const json& v, const std::string& where) {
        if (!v.is_number_integer()) {
            throw ConfigError(where + ": expected an integer");
        }
        const auto x = v.get<long long>();
        if (x < INT32_MIN || x > INT32_MAX) {
            throw ConfigError(where + ": integer out of range");
        }
        return static_cast<int>(x);
    }

    static std::uint64_t as_u64(const json& v, const std::string& where) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError(where + ": expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    static double as_double(const json& v, const std::string& where) {
        if (!v.is_number()) {
            throw ConfigError(where + ": expected a number");
        }
        return v.get<double>();
    }

    static std::string as_string(const json& v, const std::string& where) {
        if (!v.is_string()) {
            throw ConfigError(where + ": expected a string");
        }
        return v.get<std::string>();
    }

private:
    const json& value_;
    std::string path_;
    std::set<std::string> known_;
};

const json& require_array(const json& v, const std::string& where) {
    if (!v.is_array()) {
        throw ConfigError(where + ": expected an array");
    }
    if (v.empty()) {
        throw ConfigError(where + ": must not be empty");
    }
    return v;
}

GeneratorSpec parse_generator(const json& value, const std::string& path, const std::filesystem::path& base_dir) {
    ObjectReader r(value, path);
    GeneratorSpec g;
    std::string variant = std::string(to_string(g.variant));
    r.read("variant", variant);
    const auto parsed = parse_generator_variant(variant);
    if (!parsed) {
        throw ConfigError(r.at("variant") +
                          ": expected one of rotating_gaussians, abrupt_shift, label_burst, file; got '" + variant +
                          "'");
    }
    if (*parsed == GeneratorVariant::file) {
        const auto rel = ObjectReader::as_string(r.require("path"), r.at("path"));
        std::filesystem::path file(rel);
        if (file.is_relative() && !base_dir.empty()) {
            file = base_dir / file;
        }
        g = ingest_file(file);
        const int inferred_classes = g.num_classes;
        r.read("num_classes", g.num_classes);
        if (g.num_classes < inferred_classes) {
            throw ConfigError(r.at("num_classes") + ": file contains label " + std::to_string(inferred_classes - 1));
        }
        int dim = g.dim;
        r.read("dim", dim);
        if (dim != g.dim) {
            throw ConfigError(r.at("dim") + ": file has " + std::to_string(g.dim) + " features");
        }
        r.finish();
        return g;
    }
    g.variant = *parsed;
    r.read("num_classes", g.num_classes);
    r.read("dim", g.dim);
    r.read("noise", g.noise);
    r.read("omega", g.omega);
    r.read("radius", g.radius);
    r.read("burst_length", g.burst_length);
    r.read("shift_step", g.shift_step);
    r.read("shift", g.shift);
    r.finish();
    return g;
}

StreamConfig parse_stream(const json& value, const std::filesystem::path& base_dir) {
    ObjectReader r(value, "$.stream");
    StreamConfig s;
    r.read("n", s.n);
    r.read("horizon", s.horizon);
    r.read("seed", s.seed);
    r.read("validation_fraction", s.validation_fraction);
    if (const auto* g = r.find("generator")) {
        s.generator = parse_generator(*g, r.at("generator"), base_dir);
    }
    r.finish();
    if (s.n < 1) {
        throw ConfigError("$.stream.n: batch size must be >= 1");
    }
    if (s.horizon < 1) {
        throw ConfigError("$.stream.horizon: must be >= 1");
    }
    if (!(s.validation_fraction >= 0.0 && s.validation_fraction < 1.0)) {
        throw ConfigError("$.stream.validation_fraction: must lie in [0, 1)");
    }
    try {
        validate(s);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("$.") + e.what());
    }
    return s;
}

ModelConfig parse_model(const json& value) {
    ObjectReader r(value, "$.model");
    ModelConfig m;
    std::string arch(to_string(m.arch));
    r.read("arch", arch);
    const auto parsed = parse_architecture(arch);
    if (!parsed) {
        throw ConfigError(r.at("arch") + ": expected linear or mlp; got '" + arch + "'");
    }
    m.arch = *parsed;
    r.read("hidden", m.hidden);
    r.read("learning_rate", m.learning_rate);
    r.read("momentum", m.momentum);
    r.read("weight_decay", m.weight_decay);
    r.finish();
    if (m.arch == Architecture::mlp && m.hidden < 1) {
        throw ConfigError(r.at("hidden") + ": must be >= 1");
    }
    if (!(m.learning_rate > 0.0) || !std::isfinite(m.learning_rate)) {
        throw ConfigError(r.at("learning_rate") + ": must be positive");
    }
    if (!(m.momentum >= 0.0 && m.momentum < 1.0)) {
        throw ConfigError(r.at("momentum") + ": must lie in [0, 1)");
    }
    if (!(m.weight_decay >= 0.0) || !std::isfinite(m.weight_decay)) {
        throw ConfigError(r.at("weight_decay") + ": must be >= 0");
    }
    return m;
}

MethodSpec parse_method(const json& value, const std::string& path) {
    ObjectReader r(value, path);
    MethodSpec m;
    const auto variant = ObjectReader::as_string(r.require("variant"), r.at("variant"));
    const auto parsed = parse_method_variant(variant);
    if (!parsed) {
        throw ConfigError(r.at("variant") + ": expected naive, iwms, pseudo_label or tta; got '" + variant + "'");
    }
    m.variant = *parsed;
    if (const auto* comp = r.find("composition")) {
        const auto& items = require_array(*comp, r.at("composition"));
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto where = r.at("composition") + "[" + std::to_string(i) + "]";
            const auto code = ObjectReader::as_string(items[i], where);
            const auto source = parse_batch_source(code);
            if (!source) {
                throw ConfigError(where + ": expected N, R or W; got '" + code + "'");
            }
            m.composition.push_back(*source);
        }
    }
    std::string mode(to_string(m.iwms_mode));
    r.read("iwms_mode", mode);
    const auto parsed_mode = parse_iwms_mode(mode);
    if (!parsed_mode) {
        throw ConfigError(r.at("iwms_mode") + ": expected two_stage or single_shot; got '" + mode + "'");
    }
    m.iwms_mode = *parsed_mode;
    r.read("lambda", m.lambda);
    r.read("epsilon", m.epsilon);
    r.read("name", m.name);
    r.finish();
    if (!(m.lambda >= 0.0 && m.lambda <= 1.0)) {
        throw ConfigError(r.at("lambda") + ": must lie in [0, 1]");
    }
    if (!(m.epsilon >= 0.0) || !std::isfinite(m.epsilon)) {
        throw ConfigError(r.at("epsilon") + ": must be finite and >= 0");
    }
    return m;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::string optional_number(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StreamError(path.string() + ": cannot open for writing");
    }
    out << text;
    if (!out) {
        throw StreamError(path.string() + ": write failed");
    }
}

std::optional<json> load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        return std::nullopt;
    }
    try {
        return json::parse(in);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stdev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double ss = 0.0;
    for (const double x : xs) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

} // namespace

nlohmann::json canonical_json(const RunSpec& run) {
    json j;
    const auto& s = run.stream;
    const auto& g = s.generator;
    j["stream"] = {{"n", s.n},
                   {"delay", s.delay},
                   {"horizon", s.horizon},
                   {"seed", s.seed},
                   {"validation_fraction", s.validation_fraction}};
    if (g.variant == GeneratorVariant::file) {
        j["stream"]["generator"] = {{"variant", to_string(g.variant)},
                                    {"path", g.path.generic_string()},
                                    {"num_classes", g.num_classes},
                                    {"dim", g.dim}};
    } else {
        j["stream"]["generator"] = {{"variant", to_string(g.variant)}, {"num_classes", g.num_classes},
                                    {"dim", g.dim},                     {"noise", g.noise},
                                    {"omega", g.omega},                 {"radius", g.radius},
                                    {"burst_length", g.burst_length},   {"shift_step", g.shift_step},
                                    {"shift", g.shift}};
    }
    j["model"] = {{"arch", to_string(run.model.arch)},
                  {"hidden", run.model.hidden},
                  {"learning_rate", run.model.learning_rate},
                  {"momentum", run.model.momentum},
                  {"weight_decay", run.model.weight_decay}};
    j["memory"] = {{"capacity", run.buffer_capacity}};
    std::string composition;
    for (const auto source : effective_composition(run.method)) {
        composition += to_code(source);
    }
    j["method"] = {{"variant", to_string(run.method.variant)},
                   {"composition", composition},
                   {"budget", run.method.budget},
                   {"iwms_mode", to_string(run.method.iwms_mode)},
                   {"lambda", run.method.lambda},
                   {"epsilon", run.method.epsilon},
                   {"name", method_label(run.method)}};
    return j;
}

std::string run_id(const RunSpec& run) { return hex64(fnv1a64(canonical_json(run).dump())); }

std::vector<RunSpec> expand_plan(const ExperimentPlan& plan) {
    std::vector<RunSpec> runs;
    for (const auto& method : plan.methods) {
        for (const int d : plan.delays) {
            for (const int c : plan.budgets) {
                for (const auto seed : plan.seeds) {
                    RunSpec run;
                    run.stream = plan.stream;
                    run.stream.delay = d;
                    run.stream.seed = seed;
                    run.model = plan.model;
                    run.buffer_capacity = plan.buffer_capacity;
                    run.method = method;
                    run.method.budget = c;
                    run.id = run_id(run);
                    runs.push_back(std::move(run));
                }
            }
        }
    }
    return runs;
}

ExperimentPlan parse_plan(const nlohmann::json& config, const std::filesystem::path& base_dir) {
    ObjectReader r(config, "$");
    ExperimentPlan plan;
    plan.stream = parse_stream(r.require("stream"), base_dir);
    if (const auto* m = r.find("model")) {
        plan.model = parse_model(*m);
    }
    if (const auto* mem = r.find("memory")) {
        ObjectReader mr(*mem, "$.memory");
        int capacity = static_cast<int>(kDefaultBufferCapacity);
        mr.read("capacity", capacity);
        mr.finish();
        if (capacity < 1) {
            throw ConfigError("$.memory.capacity: must be >= 1");
        }
        plan.buffer_capacity = static_cast<std::size_t>(capacity);
    }
    const auto& methods = require_array(r.require("methods"), "$.methods");
    for (std::size_t i = 0; i < methods.size(); ++i) {
        plan.methods.push_back(parse_method(methods[i], "$.methods[" + std::to_string(i) + "]"));
    }
    if (const auto* d = r.find("delays")) {
        plan.delays.clear();
        const auto& items = require_array(*d, "$.delays");
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto where = "$.delays[" + std::to_string(i) + "]";
            const int value = ObjectReader::as_int(items[i], where);
            if (value < 0) {
                throw ConfigError(where + ": label delay must be >= 0, got " + std::to_string(value));
            }
            plan.delays.push_back(value);
        }
    }
    if (const auto* b = r.find("budgets")) {
        plan.budgets.clear();
        const auto& items = require_array(*b, "$.budgets");
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto where = "$.budgets[" + std::to_string(i) + "]";
            const int value = ObjectReader::as_int(items[i], where);
            if (value < 1) {
                throw ConfigError(where + ": budget C must be >= 1, got " + std::to_string(value));
            }
            plan.budgets.push_back(value);
        }
    }
    if (const auto* s = r.find("seeds")) {
        plan.seeds.clear();
        const auto& items = require_array(*s, "$.seeds");
        for (std::size_t i = 0; i < items.size(); ++i) {
            plan.seeds.push_back(ObjectReader::as_u64(items[i], "$.seeds[" + std::to_string(i) + "]"));
        }
    } else {
        plan.seeds = {plan.stream.seed};
    }
    std::string out_dir = plan.output_dir.string();
    r.read("output_dir", out_dir);
    plan.output_dir = out_dir;
    if (plan.output_dir.is_relative() && !base_dir.empty()) {
        plan.output_dir = base_dir / plan.output_dir;
    }
    r.finish();
    return plan;
}

ExperimentPlan parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string() + ": cannot open config file");
    }
    json config;
    try {
        config = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return parse_plan(config, path.parent_path());
}

void apply_seed_override(ExperimentPlan& plan) {
    const char* raw = std::getenv("DELAYSTREAM_SEED_OVERRIDE");
    if (raw == nullptr || *raw == '\0') {
        return;
    }
    const auto value = csv::parse_int(raw);
    if (!value || *value < 0) {
        throw ConfigError(std::string("DELAYSTREAM_SEED_OVERRIDE: expected a non-negative integer, got '") + raw + "'");
    }
    plan.seeds = {static_cast<std::uint64_t>(*value)};
    plan.stream.seed = static_cast<std::uint64_t>(*value);
}

RunTrace execute_run(const RunSpec& run, TrainingObserver* observer) {
    auto stream = open_stream(run.stream);
    RunOptions options;
    options.buffer_capacity = run.buffer_capacity;
    options.observer = observer;
    options.record_predictions = false;
    return run_method(stream, run.method, run.model, options);
}

std::size_t PlanSummary::failures() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) {
        return r.status == RunOutcome::Status::failed;
    }));
}

std::vector<AggregateRow> aggregate_outcomes(const std::vector<RunOutcome>& runs) {
    struct Acc {
        std::vector<double> acc;
        std::vector<double> bwt;
    };
    std::vector<std::tuple<std::string, int, int>> order;
    std::map<std::tuple<std::string, int, int>, Acc> groups;
    for (const auto& r : runs) {
        if (r.status == RunOutcome::Status::failed) {
            continue;
        }
        const auto key = std::make_tuple(method_label(r.spec.method), r.spec.stream.delay, r.spec.method.budget);
        if (!groups.contains(key)) {
            order.push_back(key);
        }
        auto& g = groups[key];
        g.acc.push_back(r.final_online_accuracy);
        if (r.backward_transfer) {
            g.bwt.push_back(*r.backward_transfer);
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& key : order) {
        const auto& g = groups.at(key);
        AggregateRow row;
        std::tie(row.method, row.delay, row.budget) = key;
        row.runs = static_cast<int>(g.acc.size());
        row.mean_final_accuracy = mean_of(g.acc);
        row.stdev_final_accuracy = stdev_of(g.acc);
        if (!g.bwt.empty()) {
            row.mean_backward_transfer = mean_of(g.bwt);
            row.stdev_backward_transfer = stdev_of(g.bwt);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

PlanSummary run_plan(const ExperimentPlan& plan, const RunPlanOptions& options) {
    namespace fs = std::filesystem;
    const auto runs = expand_plan(plan);
    fs::create_directories(plan.output_dir);

    PlanSummary summary;
    summary.runs.resize(runs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    const auto log = [&](const std::string& line) {
        if (options.log != nullptr) {
            const std::lock_guard lock(log_mutex);
            *options.log << line << '\n';
        }
    };

    const auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            const auto& run = runs[i];
            auto& outcome = summary.runs[i];
            outcome.spec = run;
            const auto dir = plan.output_dir / run.id;
            const auto summary_path = dir / "summary.json";
            const auto label = method_label(run.method) + " d=" + std::to_string(run.stream.delay) +
                               " C=" + std::to_string(run.method.budget) + " seed=" + std::to_string(run.stream.seed);
            if (!options.overwrite) {
                if (const auto existing = load_json(summary_path);
                    existing && existing->value("status", "") == "ok" && existing->contains("final_online_acc")) {
                    outcome.status = RunOutcome::Status::skipped;
                    outcome.final_online_accuracy = existing->at("final_online_acc").get<double>();
                    const auto& bwt = existing->at("backward_transfer");
                    if (!bwt.is_null()) {
                        outcome.backward_transfer = bwt.get<double>();
                    }
                    log("skip " + run.id + " " + label);
                    continue;
                }
            }
            try {
                fs::create_directories(dir);
                const auto trace = execute_run(run);
                std::ostringstream trace_csv;
                write_trace_csv(trace_csv, trace);
                write_text_file(dir / "trace.csv", trace_csv.str());
                auto j = summary_json(trace);
                j["run_id"] = run.id;
                j["status"] = "ok";
                j["config"] = canonical_json(run);
                write_text_file(summary_path, j.dump(2) + "\n");
                outcome.status = RunOutcome::Status::ok;
                outcome.final_online_accuracy = trace.final_online_accuracy;
                outcome.backward_transfer = trace.backward_transfer;
                log("done " + run.id + " " + label + " acc=" + csv::format_double(trace.final_online_accuracy));
            } catch (const std::exception& e) {
                outcome.status = RunOutcome::Status::failed;
                outcome.error = e.what();
                try {
                    fs::create_directories(dir);
                    json j{{"run_id", run.id},
                           {"status", "error"},
                           {"error", outcome.error},
                           {"method", method_label(run.method)},
                           {"d", run.stream.delay},
                           {"C", run.method.budget},
                           {"seed", run.stream.seed}};
                    write_text_file(summary_path, j.dump(2) + "\n");
                } catch (const std::exception&) {
                    // the error is still reported through the outcome
                }
                log("FAILED " + run.id + " " + label + ": " + outcome.error);
            }
        }
    };

    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(runs.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }

    std::ostringstream aggregate;
    aggregate << "method,d,C,seed,final_acc,backward_transfer\n";
    for (const auto& r : summary.runs) {
        if (r.status == RunOutcome::Status::failed) {
            continue;
        }
        aggregate << method_label(r.spec.method) << ',' << r.spec.stream.delay << ',' << r.spec.method.budget << ','
                  << r.spec.stream.seed << ',' << csv::format_double(r.final_online_accuracy) << ','
                  << optional_number(r.backward_transfer) << '\n';
    }
    write_text_file(plan.output_dir / "aggregate.csv", aggregate.str());

    summary.aggregate = aggregate_outcomes(summary.runs);
    std::ostringstream stats;
    stats << "method,d,C,runs,mean_final_acc,stdev_final_acc,mean_backward_transfer,stdev_backward_transfer\n";
    for (const auto& row : summary.aggregate) {
        stats << row.method << ',' << row.delay << ',' << row.budget << ',' << row.runs << ','
              << csv::format_double(row.mean_final_accuracy) << ',' << csv::format_double(row.stdev_final_accuracy)
              << ',' << optional_number(row.mean_backward_transfer) << ','
              << optional_number(row.stdev_backward_transfer) << '\n';
    }
    write_text_file(plan.output_dir / "aggregate_stats.csv", stats.str());
    return summary;
}

Report build_report(const std::filesystem::path& output_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(output_dir)) {
        throw ConfigError(output_dir.string() + ": not a directory");
    }
    struct Entry {
        std::string method;
        int d;
        int c;
        std::uint64_t seed;
        double acc;
        std::optional<double> bwt;
    };
    std::vector<Entry> entries;
    std::vector<fs::path> dirs;
    for (const auto& item : fs::directory_iterator(output_dir)) {
        if (item.is_directory()) {
            dirs.push_back(item.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const auto j = load_json(dir / "summary.json");
        if (!j || j->value("status", "") != "ok") {
            continue;
        }
        Entry e{j->at("method").get<std::string>(), j->at("d").get<int>(), j->at("C").get<int>(),
                j->at("seed").get<std::uint64_t>(), j->at("final_online_acc").get<double>(), std::nullopt};
        if (!j->at("backward_transfer").is_null()) {
            e.bwt = j->at("backward_transfer").get<double>();
        }
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.method, a.d, a.c, a.seed) < std::tie(b.method, b.d, b.c, b.seed);
    });

    std::map<std::tuple<std::string, int, int>, std::vector<double>> groups;
    for (const auto& e : entries) {
        groups[{e.method, e.d, e.c}].push_back(e.acc);
    }
    Report report;
    const auto naive_mean = [&](int d, int c) -> std::optional<double> {
        const auto it = groups.find({"naive", d, c});
        return it == groups.end() ? std::nullopt : std::optional<double>(mean_of(it->second));
    };
    for (const auto& [key, accs] : groups) {
        ReportRow row;
        std::tie(row.method, row.delay, row.budget) = key;
        row.runs = static_cast<int>(accs.size());
        row.mean_final_accuracy = mean_of(accs);
        const auto naive_d = naive_mean(row.delay, row.budget);
        const auto naive_0 = naive_mean(0, row.budget);
        if (naive_d && naive_0) {
            row.gap = compute_gap(*naive_d, *naive_0);
            row.recovery = compute_recovery(row.mean_final_accuracy, *naive_d, *row.gap);
        }
        report.rows.push_back(std::move(row));
    }

    // aggregate.csv must agree with the per-run summaries, row for row.
    std::ifstream aggregate(output_dir / "aggregate.csv");
    if (aggregate) {
        std::multiset<std::string> expected;
        for (const auto& e : entries) {
            expected.insert(e.method + "," + std::to_string(e.d) + "," + std::to_string(e.c) + "," +
                            std::to_string(e.seed) + "," + csv::format_double(e.acc) + "," + optional_number(e.bwt));
        }
        std::multiset<std::string> found;
        std::string line;
        std::getline(aggregate, line);
        while (std::getline(aggregate, line)) {
            if (!csv::chomp(line).empty()) {
                found.insert(std::string(csv::chomp(line)));
            }
        }
        for (const auto& row : found) {
            if (!expected.contains(row)) {
                report.inconsistencies.push_back("aggregate.csv row without matching summary: " + row);
            }
        }
        for (const auto& row : expected) {
            if (!found.contains(row)) {
                report.inconsistencies.push_back("summary missing from aggregate.csv: " + row);
            }
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const Report& report) {
    out << "method,d,C,runs,mean_final_acc,G_d,R_d\n";
    for (const auto& row : report.rows) {
        out << row.method << ',' << row.delay << ',' << row.budget << ',' << row.runs << ','
            << csv::format_double(row.mean_final_accuracy) << ',' << optional_number(row.gap) << ','
            << optional_number(row.recovery) << '\n';
    }
}

} // namespace delaystream
