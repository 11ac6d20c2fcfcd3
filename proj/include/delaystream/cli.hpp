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

#include <iosfwd>
#include <string>
#include <vector>

namespace delaystream {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitRunFailure = 2,
    kExitSelftestFailure = 3,
};

/// Entry point of the `delaystream` tool. `args` excludes the program name.
///
///   run <config.json> [--workers k] [--overwrite] [--verbose]
///   gen <rotating|abrupt|burst> --steps T --n N -o file.csv [generator options]
///   report <output_dir>
///   selftest
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace delaystream
