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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kbopt::text {

std::string case_fold(std::string_view s);
std::string trim(std::string_view s);

// Case-folded runs of ASCII letters and digits; everything else separates.
std::vector<std::string> tokenize(std::string_view s);

// Stable 64-bit FNV-1a over the bytes of s, perturbed by seed.
std::uint64_t hash64(std::string_view s, std::uint64_t seed);

// Shortest decimal that parses back to the same double.
std::string format_number(double v);
// Fixed three decimals, as used in prompts and reports.
std::string format_fixed3(double v);

}  // namespace kbopt::text
