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
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "delaystream/cli.hpp"
#include "temp_dir.hpp"

using namespace delaystream;
using nlohmann::json;
using test_support::TempDir;
using test_support::read_file;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

void write_json(const std::filesystem::path& path, const json& j) { std::ofstream(path) << j.dump(2); }

} // namespace

TEST(CliTest, SelftestPasses) {
    const auto r = cli({"selftest"});
    EXPECT_EQ(r.code, kExitOk) << r.out;
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(CliTest, UsageErrors) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"gen", "spiral", "--steps", "3", "-o", "x.csv"}).code, kExitUsage);
    EXPECT_EQ(cli({"run"}).code, kExitUsage);
}

TEST(CliTest, BadConfigExitsOne) {
    TempDir dir("cli-bad");
    write_json(dir / "c.json", json{{"stream", json::object()},
                                    {"methods", json::array({{{"variant", "naive"}}})},
                                    {"delays", {-1}}});
    const auto r = cli({"run", (dir / "c.json").string()});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("$.delays[0]"), std::string::npos);
    EXPECT_EQ(cli({"run", (dir / "missing.json").string()}).code, kExitUsage);
}

TEST(CliTest, ReportOnMissingDirectoryExitsTwo) {
    TempDir dir("cli-report");
    EXPECT_EQ(cli({"report", (dir / "nothing").string()}).code, kExitRunFailure);
}

TEST(CliTest, GeneratedFileReproducesInMemoryStream) {
    TempDir dir("cli-gen");
    const auto csv_path = dir / "s.csv";
    const auto g = cli({"gen", "rotating", "--steps", "100", "--n", "16", "--omega", "0.01", "-o", csv_path.string()});
    ASSERT_EQ(g.code, kExitOk) << g.err;
    EXPECT_NE(g.out.find("1600 rows"), std::string::npos);

    const json methods = json::array({{{"variant", "naive"}}, {{"variant", "iwms"}}});
    const json model = {{"hidden", 8}, {"learning_rate", 0.05}};
    write_json(dir / "mem.json",
               json{{"stream",
                     {{"n", 16},
                      {"horizon", 100},
                      {"seed", 0},
                      {"generator", {{"variant", "rotating_gaussians"}, {"omega", 0.01}}}}},
                    {"model", model},
                    {"methods", methods},
                    {"delays", {3}},
                    {"output_dir", "mem"}});
    write_json(dir / "file.json",
               json{{"stream",
                     {{"n", 16}, {"horizon", 100}, {"seed", 0}, {"generator", {{"variant", "file"}, {"path", "s.csv"}}}}},
                    {"model", model},
                    {"methods", methods},
                    {"delays", {3}},
                    {"output_dir", "file"}});
    ASSERT_EQ(cli({"run", (dir / "mem.json").string()}).code, kExitOk);
    const auto r = cli({"run", (dir / "file.json").string(), "--workers", "2"});
    ASSERT_EQ(r.code, kExitOk) << r.err;

    std::vector<std::string> mem_traces;
    std::vector<std::string> file_traces;
    for (const auto& [sub, sink] : {std::pair{"mem", &mem_traces}, std::pair{"file", &file_traces}}) {
        for (const auto& item : std::filesystem::directory_iterator(dir / sub)) {
            if (item.is_directory()) {
                const auto summary = json::parse(read_file(item.path() / "summary.json"));
                sink->push_back(summary.at("method").get<std::string>() + "\n" +
                                read_file(item.path() / "trace.csv"));
            }
        }
        std::sort(sink->begin(), sink->end());
    }
    ASSERT_EQ(mem_traces.size(), 2U);
    EXPECT_EQ(mem_traces, file_traces);
    EXPECT_EQ(read_file(dir / "mem" / "aggregate.csv"), read_file(dir / "file" / "aggregate.csv"));

    const auto report = cli({"report", (dir / "file").string()});
    EXPECT_EQ(report.code, kExitOk) << report.err;
    EXPECT_EQ(report.out.rfind("method,d,C,runs,mean_final_acc,G_d,R_d\n", 0), 0U);
}
