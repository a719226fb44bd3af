/*
 * Copyright (c) 2026 The adapl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "adapl/synth_bench.hpp"

namespace adapl {

/// Runs the command-line front end. `args` excludes the program name.
/// Returns 0 on success, 2 on usage or validation errors, 1 on runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a synthetic-benchmark spec file (keys as in the `synth` help text);
/// missing keys take the standard benchmark values.
SynthSpec read_synth_spec(const std::string& path);

}  // namespace adapl
