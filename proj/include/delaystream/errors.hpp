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

#include <stdexcept>
#include <string>

namespace delaystream {

/// Invalid stream, model, method or plan configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed ingestion file or stream misuse.
class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between tensors, batches and models.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A method tried to spend more backward passes than the step budget allows.
/// This always indicates a harness bug; runs abort on it.
class BudgetExceeded : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Replay memory misuse (empty buffer, duplicate ids).
class BufferError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace delaystream
