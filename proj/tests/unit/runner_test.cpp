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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "delaystream/errors.hpp"
#include "delaystream/metrics.hpp"
#include "delaystream/runner.hpp"
#include "temp_dir.hpp"

using namespace delaystream;
using nlohmann::json;
using test_support::TempDir;
using test_support::read_file;

namespace {

json small_config(const std::filesystem::path& out) {
    return json{
        {"stream",
         {{"n", 8},
          {"horizon", 30},
          {"seed", 1},
          {"generator", {{"variant", "rotating_gaussians"}, {"num_classes", 3}, {"dim", 4}, {"omega", 0.02}}}}},
        {"model", {{"hidden", 8}, {"learning_rate", 0.05}}},
        {"memory", {{"capacity", 128}}},
        {"methods", json::array({{{"variant", "naive"}}})},
        {"delays", {0, 5}},
        {"seeds", {1, 2}},
        {"output_dir", out.string()},
    };
}

std::string config_error(const json& config) {
    try {
        parse_plan(config);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::size_t count_lines(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

} // namespace

TEST(ParsePlanTest, MinimalConfigDefaults) {
    const auto plan = parse_plan(json{{"stream", {{"seed", 7}}}, {"methods", json::array({{{"variant", "iwms"}}})}});
    EXPECT_DOUBLE_EQ(plan.model.learning_rate, 0.005);
    EXPECT_DOUBLE_EQ(plan.model.momentum, 0.9);
    EXPECT_DOUBLE_EQ(plan.model.weight_decay, 1e-5);
    EXPECT_EQ(plan.buffer_capacity, 4096U);
    ASSERT_EQ(plan.methods.size(), 1U);
    EXPECT_DOUBLE_EQ(plan.methods[0].lambda, 0.99);
    EXPECT_DOUBLE_EQ(plan.methods[0].epsilon, 0.001);
    EXPECT_EQ(plan.methods[0].iwms_mode, IwmsMode::two_stage);
    EXPECT_EQ(plan.delays, std::vector<int>{0});
    EXPECT_EQ(plan.budgets, std::vector<int>{1});
    EXPECT_EQ(plan.seeds, std::vector<std::uint64_t>{7});
}

TEST(ParsePlanTest, NegativeDelayNamesThePath) {
    auto config = small_config("out");
    config["delays"] = {-1};
    EXPECT_EQ(config_error(config), "$.delays[0]: label delay must be >= 0, got -1");
}

TEST(ParsePlanTest, UnknownKeyIsRejected) {
    auto config = small_config("out");
    config["budgett"] = {1};
    EXPECT_EQ(config_error(config), "$.budgett: unknown key");
    auto nested = small_config("out");
    nested["stream"]["generator"]["omgea"] = 0.1;
    EXPECT_EQ(config_error(nested), "$.stream.generator.omgea: unknown key");
}

TEST(ParsePlanTest, TypeErrors) {
    auto config = small_config("out");
    config["stream"]["n"] = "eight";
    EXPECT_EQ(config_error(config), "$.stream.n: expected an integer");
    auto fractional = small_config("out");
    fractional["stream"]["n"] = 8.5;
    EXPECT_EQ(config_error(fractional), "$.stream.n: expected an integer");
    auto lr = small_config("out");
    lr["model"]["learning_rate"] = "fast";
    EXPECT_EQ(config_error(lr), "$.model.learning_rate: expected a number");
}

TEST(ParsePlanTest, MissingAndRangeErrors) {
    auto config = small_config("out");
    config.erase("methods");
    EXPECT_EQ(config_error(config), "$.methods: missing required key");
    auto budget = small_config("out");
    budget["budgets"] = {2, 0};
    EXPECT_EQ(config_error(budget).rfind("$.budgets[1]: budget C must be >= 1", 0), 0U);
    auto variant = small_config("out");
    variant["methods"][0]["variant"] = "magic";
    EXPECT_EQ(config_error(variant).rfind("$.methods[0].variant", 0), 0U);
    auto comp = small_config("out");
    comp["methods"][0]["composition"] = {"N", "Q"};
    EXPECT_EQ(config_error(comp).rfind("$.methods[0].composition[1]", 0), 0U);
    auto lambda = small_config("out");
    lambda["methods"][0]["lambda"] = 1.5;
    EXPECT_EQ(config_error(lambda).rfind("$.methods[0].lambda", 0), 0U);
}

TEST(ParsePlanTest, ConfigFileErrors) {
    TempDir dir("cfg");
    EXPECT_THROW(parse_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(parse_config(dir / "bad.json"), ConfigError);
}

TEST(ExpandPlanTest, OrderAndCount) {
    auto plan = parse_plan(small_config("out"));
    plan.budgets = {1, 2};
    const auto runs = expand_plan(plan);
    ASSERT_EQ(runs.size(), 8U);
    EXPECT_EQ(runs[0].stream.delay, 0);
    EXPECT_EQ(runs[0].method.budget, 1);
    EXPECT_EQ(runs[0].stream.seed, 1U);
    EXPECT_EQ(runs[1].stream.seed, 2U);
    EXPECT_EQ(runs[2].method.budget, 2);
    EXPECT_EQ(runs[4].stream.delay, 5);
}

TEST(RunIdTest, DeterministicAndFieldSensitive) {
    const auto plan = parse_plan(small_config("out"));
    const auto runs = expand_plan(plan);
    const auto again = expand_plan(plan);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        EXPECT_EQ(runs[i].id, again[i].id);
        EXPECT_EQ(runs[i].id.size(), 16U);
        ids.insert(runs[i].id);
    }
    EXPECT_EQ(ids.size(), runs.size());

    const auto base = runs[0];
    const auto changed = [&](auto mutate) {
        auto copy = base;
        mutate(copy);
        return run_id(copy) != base.id;
    };
    EXPECT_TRUE(changed([](RunSpec& r) { r.model.learning_rate *= 2; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.model.hidden += 1; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.stream.n += 1; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.stream.generator.noise += 0.1; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.buffer_capacity += 1; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.method.lambda = 0.5; }));
    EXPECT_TRUE(changed([](RunSpec& r) { r.method.variant = MethodVariant::iwms; }));
}

TEST(RunPlanTest, WritesOneDirectoryPerRun) {
    TempDir dir("plan");
    const auto plan = parse_plan(small_config(dir.path()));
    const auto summary = run_plan(plan);
    ASSERT_EQ(summary.runs.size(), 4U);
    EXPECT_EQ(summary.failures(), 0U);
    for (const auto& run : summary.runs) {
        EXPECT_EQ(run.status, RunOutcome::Status::ok);
        const auto trace = read_file(dir / run.spec.id / "trace.csv");
        EXPECT_EQ(count_lines(trace), 31U);
        const auto j = json::parse(read_file(dir / run.spec.id / "summary.json"));
        EXPECT_EQ(j.at("status"), "ok");
        EXPECT_EQ(j.at("run_id"), run.spec.id);
        EXPECT_EQ(j.at("final_online_acc").get<double>(), run.final_online_accuracy);
        EXPECT_TRUE(j.at("backward_transfer").is_null());
    }
    const auto aggregate = read_file(dir / "aggregate.csv");
    EXPECT_EQ(aggregate.rfind("method,d,C,seed,final_acc,backward_transfer\n", 0), 0U);
    EXPECT_EQ(count_lines(aggregate), 5U);
    ASSERT_EQ(summary.aggregate.size(), 2U);
    EXPECT_EQ(summary.aggregate[0].runs, 2);
    EXPECT_EQ(summary.aggregate[1].delay, 5);
    EXPECT_TRUE(std::filesystem::exists(dir / "aggregate_stats.csv"));
}

TEST(RunPlanTest, TraceMatchesDirectExecution) {
    TempDir dir("direct");
    const auto plan = parse_plan(small_config(dir.path()));
    const auto summary = run_plan(plan);
    const auto& run = summary.runs[3];
    std::ostringstream expected;
    write_trace_csv(expected, execute_run(run.spec));
    EXPECT_EQ(read_file(dir / run.spec.id / "trace.csv"), expected.str());
}

TEST(RunPlanTest, RerunIsByteIdentical) {
    TempDir dir("rerun");
    const auto plan = parse_plan(small_config(dir.path()));
    const auto first = run_plan(plan);
    std::vector<std::string> before;
    for (const auto& r : first.runs) {
        before.push_back(read_file(dir / r.spec.id / "trace.csv") + read_file(dir / r.spec.id / "summary.json"));
    }
    const auto aggregate = read_file(dir / "aggregate.csv");
    RunPlanOptions options;
    options.overwrite = true;
    const auto second = run_plan(plan, options);
    for (std::size_t i = 0; i < second.runs.size(); ++i) {
        EXPECT_EQ(second.runs[i].status, RunOutcome::Status::ok);
        const auto& id = second.runs[i].spec.id;
        EXPECT_EQ(read_file(dir / id / "trace.csv") + read_file(dir / id / "summary.json"), before[i]);
    }
    EXPECT_EQ(read_file(dir / "aggregate.csv"), aggregate);
}

TEST(RunPlanTest, ExistingRunsAreSkippedWithoutOverwrite) {
    TempDir dir("skip");
    const auto plan = parse_plan(small_config(dir.path()));
    const auto first = run_plan(plan);
    const auto aggregate = read_file(dir / "aggregate.csv");
    const auto second = run_plan(plan);
    for (std::size_t i = 0; i < second.runs.size(); ++i) {
        EXPECT_EQ(second.runs[i].status, RunOutcome::Status::skipped);
        EXPECT_EQ(second.runs[i].final_online_accuracy, first.runs[i].final_online_accuracy);
    }
    EXPECT_EQ(read_file(dir / "aggregate.csv"), aggregate);
}

TEST(RunPlanTest, WorkerCountDoesNotChangeOutputs) {
    TempDir one("w1");
    TempDir four("w4");
    auto plan = parse_plan(small_config(one.path()));
    plan.budgets = {1, 2};
    run_plan(plan);
    plan.output_dir = four.path();
    RunPlanOptions options;
    options.workers = 4;
    const auto summary = run_plan(plan, options);
    for (const auto& r : summary.runs) {
        EXPECT_EQ(read_file(one / r.spec.id / "trace.csv"), read_file(four / r.spec.id / "trace.csv"));
        EXPECT_EQ(read_file(one / r.spec.id / "summary.json"), read_file(four / r.spec.id / "summary.json"));
    }
    EXPECT_EQ(read_file(one / "aggregate.csv"), read_file(four / "aggregate.csv"));
    EXPECT_EQ(read_file(one / "aggregate_stats.csv"), read_file(four / "aggregate_stats.csv"));
}

TEST(RunPlanTest, FailedRunIsRecordedAndPlanContinues) {
    TempDir dir("fail");
    auto plan = parse_plan(small_config(dir.path()));
    plan.delays = {0};
    plan.seeds = {1};
    plan.budgets = {0, 1};
    const auto summary = run_plan(plan);
    ASSERT_EQ(summary.runs.size(), 2U);
    EXPECT_EQ(summary.failures(), 1U);
    EXPECT_EQ(summary.runs[0].status, RunOutcome::Status::failed);
    EXPECT_FALSE(summary.runs[0].error.empty());
    EXPECT_EQ(summary.runs[1].status, RunOutcome::Status::ok);
    const auto j = json::parse(read_file(dir / summary.runs[0].spec.id / "summary.json"));
    EXPECT_EQ(j.at("status"), "error");
    EXPECT_EQ(count_lines(read_file(dir / "aggregate.csv")), 2U);
    // a failed run is retried on the next invocation
    const auto again = run_plan(plan);
    EXPECT_EQ(again.runs[0].status, RunOutcome::Status::failed);
    EXPECT_EQ(again.runs[1].status, RunOutcome::Status::skipped);
}

TEST(AggregateTest, MeanAndSampleStdev) {
    std::vector<RunOutcome> runs(3);
    const double accs[] = {0.2, 0.4, 0.9};
    for (int i = 0; i < 3; ++i) {
        runs[i].final_online_accuracy = accs[i];
    }
    runs[2].status = RunOutcome::Status::failed;
    const auto rows = aggregate_outcomes(runs);
    ASSERT_EQ(rows.size(), 1U);
    EXPECT_EQ(rows[0].runs, 2);
    EXPECT_NEAR(rows[0].mean_final_accuracy, 0.3, 1e-12);
    EXPECT_NEAR(rows[0].stdev_final_accuracy, std::sqrt(0.02), 1e-12);
    EXPECT_FALSE(rows[0].mean_backward_transfer.has_value());
}

TEST(ReportTest, DerivesGapAndRecovery) {
    TempDir dir("report");
    auto config = small_config(dir.path());
    config["methods"] = json::array({{{"variant", "naive"}}, {{"variant", "iwms"}}});
    const auto plan = parse_plan(config);
    const auto summary = run_plan(plan);
    ASSERT_EQ(summary.failures(), 0U);

    // independent recomputation from the in-memory outcomes
    std::map<std::pair<std::string, int>, std::vector<double>> by_key;
    for (const auto& r : summary.runs) {
        by_key[{method_label(r.spec.method), r.spec.stream.delay}].push_back(r.final_online_accuracy);
    }
    const auto mean = [&](const std::string& m, int d) {
        const auto& v = by_key.at({m, d});
        return (v[0] + v[1]) / 2.0;
    };
    const double naive0 = mean("naive", 0);
    const double naive5 = mean("naive", 5);
    const double iwms5 = mean("iwms", 5);

    const auto report = build_report(dir.path());
    EXPECT_TRUE(report.inconsistencies.empty());
    ASSERT_EQ(report.rows.size(), 4U);
    bool seen = false;
    for (const auto& row : report.rows) {
        EXPECT_EQ(row.runs, 2);
        ASSERT_TRUE(row.gap.has_value());
        if (row.method == "iwms" && row.delay == 5) {
            seen = true;
            EXPECT_NEAR(row.mean_final_accuracy, iwms5, 1e-12);
            EXPECT_NEAR(*row.gap, naive5 - naive0, 1e-12);
            if (std::abs(naive5 - naive0) > 1e-12) {
                ASSERT_TRUE(row.recovery.has_value());
                EXPECT_NEAR(*row.recovery, (iwms5 - naive5) / std::abs(naive5 - naive0), 1e-9);
            }
        }
        if (row.method == "naive" && row.delay == 0) {
            EXPECT_EQ(*row.gap, 0.0);
            EXPECT_FALSE(row.recovery.has_value());
        }
    }
    EXPECT_TRUE(seen);

    std::ostringstream csv_out;
    write_report_csv(csv_out, report);
    EXPECT_EQ(csv_out.str().rfind("method,d,C,runs,mean_final_acc,G_d,R_d\n", 0), 0U);
    EXPECT_EQ(count_lines(csv_out.str()), 5U);
}

TEST(ReportTest, FlagsTamperedAggregate) {
    TempDir dir("tamper");
    const auto plan = parse_plan(small_config(dir.path()));
    run_plan(plan);
    std::ofstream(dir / "aggregate.csv", std::ios::app) << "naive,0,1,99,0.5,\n";
    const auto report = build_report(dir.path());
    EXPECT_EQ(report.inconsistencies.size(), 1U);
    EXPECT_THROW(build_report(dir / "nope"), ConfigError);
}

TEST(SeedOverrideTest, ReplacesEverySeed) {
    auto plan = parse_plan(small_config("out"));
    ::setenv("DELAYSTREAM_SEED_OVERRIDE", "77", 1);
    apply_seed_override(plan);
    EXPECT_EQ(plan.seeds, std::vector<std::uint64_t>{77});
    EXPECT_EQ(plan.stream.seed, 77U);
    ::setenv("DELAYSTREAM_SEED_OVERRIDE", "abc", 1);
    EXPECT_THROW(apply_seed_override(plan), ConfigError);
    ::unsetenv("DELAYSTREAM_SEED_OVERRIDE");
    auto untouched = parse_plan(small_config("out"));
    apply_seed_override(untouched);
    EXPECT_EQ(untouched.seeds, (std::vector<std::uint64_t>{1, 2}));
}
