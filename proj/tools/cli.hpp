/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Command-line front end. Kept as a library so tests can drive it in process.

#include <ostream>
#include <span>
#include <string>

namespace unilabel::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;

/// `args` excludes the program name. Results go to `out`, usage text, logs
/// and error messages to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace unilabel::cli
