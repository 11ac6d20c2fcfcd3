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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace delaystream::csv {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Splits one CSV record on commas. Quoting is not supported; none of the
/// formats written or read here need it.
std::vector<std::string_view> split(std::string_view line);

/// Strips a trailing '\r' so CRLF files read the same as LF files.
std::string_view chomp(std::string_view line);

} // namespace delaystream::csv
