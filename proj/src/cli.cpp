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
#include "delaystream/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"

#include "delaystream/errors.hpp"
#include "delaystream/runner.hpp"
#include "delaystream/selftest.hpp"
#include "delaystream/stream.hpp"

namespace delaystream {

namespace {

struct GenOptions {
    std::string variant;
    int steps = 0;
    int n = 32;
    std::string output;
    std::uint64_t seed = 0;
    GeneratorSpec spec;
};

int generate_file(const GenOptions& options, std::ostream& out) {
    static const std::map<std::string, GeneratorVariant> kNames{
        {"rotating", GeneratorVariant::rotating_gaussians},
        {"rotating_gaussians", GeneratorVariant::rotating_gaussians},
        {"abrupt", GeneratorVariant::abrupt_shift},
        {"abrupt_shift", GeneratorVariant::abrupt_shift},
        {"burst", GeneratorVariant::label_burst},
        {"label_burst", GeneratorVariant::label_burst},
    };
    StreamConfig config;
    config.n = options.n;
    config.horizon = options.steps;
    config.seed = options.seed;
    config.generator = options.spec;
    config.generator.variant = kNames.at(options.variant);
    validate(config);

    std::ofstream file(options.output, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw StreamError(options.output + ": cannot open for writing");
    }
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(config.horizon) * static_cast<std::size_t>(config.n));
    for (int t = 1; t <= config.horizon; ++t) {
        const auto layout = step_layout(config, t);
        auto batch = generate_samples(config.generator, config.seed, t, layout.first_index, layout.stream_count);
        std::move(batch.begin(), batch.end(), std::back_inserter(samples));
    }
    write_stream_csv(file, samples, config.generator.dim);
    out << "wrote " << samples.size() << " rows to " << options.output << '\n';
    return kExitOk;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Online continual learning under label delay: simulator and experiment runner", "delaystream"};
    app.require_subcommand(1);

    std::string config_path;
    int workers = 1;
    bool overwrite = false;
    bool verbose = false;
    auto* run = app.add_subcommand("run", "Execute every run of an experiment plan");
    run->add_option("config", config_path, "JSON experiment plan")->required();
    run->add_option("--workers", workers, "Runs executed in parallel")->check(CLI::PositiveNumber);
    run->add_flag("--overwrite", overwrite, "Re-execute runs whose outputs already exist");
    run->add_flag("--verbose", verbose, "Print one progress line per run");

    GenOptions gen_options;
    auto* gen = app.add_subcommand("gen", "Materialize a synthetic stream as ingestion CSV");
    gen->add_option("variant", gen_options.variant, "rotating | abrupt | burst")
        ->required()
        ->check(CLI::IsMember({"rotating", "rotating_gaussians", "abrupt", "abrupt_shift", "burst", "label_burst"}));
    gen->add_option("--steps", gen_options.steps, "Number of stream steps")->required()->check(CLI::PositiveNumber);
    gen->add_option("--n", gen_options.n, "Batch size")->check(CLI::PositiveNumber);
    gen->add_option("-o,--output", gen_options.output, "Output CSV path")->required();
    gen->add_option("--seed", gen_options.seed, "Master seed");
    gen->add_option("--classes", gen_options.spec.num_classes, "Number of classes");
    gen->add_option("--dim", gen_options.spec.dim, "Feature dimension");
    gen->add_option("--noise", gen_options.spec.noise, "Isotropic noise scale");
    gen->add_option("--omega", gen_options.spec.omega, "Angular velocity per step (radians)");
    gen->add_option("--radius", gen_options.spec.radius, "Radius of the class means");
    gen->add_option("--burst", gen_options.spec.burst_length, "Label run length");
    gen->add_option("--shift-step", gen_options.spec.shift_step, "abrupt: first shifted step");
    gen->add_option("--shift", gen_options.spec.shift, "abrupt: translation along the first axis");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Recompute G_d / R_d tables from stored run summaries");
    report->add_option("output_dir", report_dir, "Directory written by `run`")->required();

    auto* selftest = app.add_subcommand("selftest", "Gradient checks and sampler goodness-of-fit");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    if (*run) {
        ExperimentPlan plan;
        try {
            plan = parse_config(config_path);
            apply_seed_override(plan);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitUsage;
        }
        try {
            RunPlanOptions options;
            options.workers = workers;
            options.overwrite = overwrite;
            options.log = verbose ? &err : nullptr;
            const auto summary = run_plan(plan, options);
            out << "method,d,C,runs,mean_final_acc,stdev_final_acc\n";
            for (const auto& row : summary.aggregate) {
                out << row.method << ',' << row.delay << ',' << row.budget << ',' << row.runs << ','
                    << row.mean_final_accuracy << ',' << row.stdev_final_accuracy << '\n';
            }
            if (summary.failures() > 0) {
                err << summary.failures() << " of " << summary.runs.size() << " runs failed\n";
                for (const auto& r : summary.runs) {
                    if (r.status == RunOutcome::Status::failed) {
                        err << "  " << r.spec.id << ": " << r.error << '\n';
                    }
                }
                return kExitRunFailure;
            }
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitRunFailure;
        }
        return kExitOk;
    }

    if (*gen) {
        try {
            return generate_file(gen_options, out);
        } catch (const ConfigError& e) {
            err << "error: " << e.what() << '\n';
            return kExitUsage;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitRunFailure;
        }
    }

    if (*report) {
        try {
            const auto table = build_report(report_dir);
            write_report_csv(out, table);
            for (const auto& issue : table.inconsistencies) {
                err << "inconsistent: " << issue << '\n';
            }
            return table.inconsistencies.empty() ? kExitOk : kExitRunFailure;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kExitRunFailure;
        }
    }

    if (*selftest) {
        return run_selftest(out) ? kExitOk : kExitSelftestFailure;
    }
    return kExitUsage;
}

} // namespace delaystream
