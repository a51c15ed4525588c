/*
 * Copyright 2026 The kbopt Authors
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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kbopt/gateway.hpp"
#include "kbopt/optimizer.hpp"

namespace kbopt {

inline constexpr const char* kVersion = "0.1.0";

// Everything one CLI run needs. Relative paths are resolved against the
// directory of the config file.
struct RunConfig {
  OptimizerConfig optimizer;
  BackendConfig backend;
  std::string tools_manifest = "stark";
  ToolOptions tool_options;
  KbKind kb_kind = KbKind::relation_text;
  std::optional<std::filesystem::path> kb_path;
  std::optional<std::filesystem::path> queries_path;
  std::vector<double> sweep_l{0.5, 0.6, 0.7};
  std::vector<double> sweep_h{0.3, 0.4, 0.5};
};

// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// The resolved configuration, as written to config.json of a run.
std::string run_config_json(const RunConfig& config);

}  // namespace kbopt
