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

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "delaystream/csv.hpp"
#include "delaystream/rng.hpp"
#include "delaystream/selftest.hpp"

using namespace delaystream;

TEST(RngTest, SameSeedSameSequence) {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
    }
}

TEST(RngTest, UniformStaysInUnitInterval) {
    Rng rng(1);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(RngTest, IndexIsUniform) {
    Rng rng(5);
    std::vector<std::size_t> counts(7, 0);
    const std::size_t draws = 70000;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto k = rng.index(7);
        ASSERT_LT(k, 7U);
        ++counts[k];
    }
    const std::vector<double> expected(7, 1.0 / 7.0);
    EXPECT_GT(chi_square_p_value(counts, expected), 0.001);
}

TEST(RngTest, NormalMoments) {
    Rng rng(9);
    const int n = 200000;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        ASSERT_TRUE(std::isfinite(z));
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(RngTest, DerivedSeedsSeparateComponents) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t master = 0; master < 20; ++master) {
        for (const char* name : {"labels", "features", "offset", "model_init", "methods"}) {
            seen.insert(derive_seed(master, name));
        }
    }
    EXPECT_EQ(seen.size(), 100U);
    EXPECT_EQ(derive_seed(3, "labels"), derive_seed(3, "labels"));
    EXPECT_NE(derive_seed(3, "labels", 0), derive_seed(3, "labels", 1));
}

TEST(RngTest, FnvKnownVectors) {
    // published FNV-1a 64 test vectors
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(ChiSquareTest, KnownStatistic) {
    // statistic 4 on 1 dof: p = erfc(sqrt(2))
    const std::vector<std::size_t> observed{60, 40};
    const std::vector<double> expected{0.5, 0.5};
    EXPECT_NEAR(chi_square_p_value(observed, expected), std::erfc(std::sqrt(2.0)), 1e-10);
}

TEST(CsvTest, FormatRoundTrips) {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        const double x = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.index(40)) - 20);
        const auto text = csv::format_double(x);
        const auto back = csv::parse_double(text);
        ASSERT_TRUE(back.has_value()) << text;
        ASSERT_EQ(*back, x) << text;
    }
    EXPECT_EQ(csv::format_double(0.5), "0.5");
    EXPECT_EQ(csv::format_double(-0.0), "0");
    EXPECT_EQ(csv::format_double(1.0), "1");
}

TEST(CsvTest, ParseRejectsJunk) {
    EXPECT_FALSE(csv::parse_double(""));
    EXPECT_FALSE(csv::parse_double("1.5x"));
    EXPECT_FALSE(csv::parse_double("nan"));
    EXPECT_FALSE(csv::parse_double("inf"));
    EXPECT_EQ(csv::parse_double("+2.5"), 2.5);
    EXPECT_EQ(csv::parse_int("-17"), -17);
    EXPECT_FALSE(csv::parse_int("1.0"));
    EXPECT_FALSE(csv::parse_int(""));
}

TEST(CsvTest, SplitAndChomp) {
    const auto fields = csv::split("a,,b,");
    ASSERT_EQ(fields.size(), 4U);
    EXPECT_EQ(fields[0], "a");
    EXPECT_EQ(fields[1], "");
    EXPECT_EQ(fields[2], "b");
    EXPECT_EQ(fields[3], "");
    EXPECT_EQ(csv::split("").size(), 1U);
    EXPECT_EQ(csv::chomp("x,y\r"), "x,y");
    EXPECT_EQ(csv::chomp("x,y"), "x,y");
}
