// Copyright 2026 The csst Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace csst::text {

// Decodes UTF-8; invalid bytes decode to U+FFFD.
std::u32string utf8_decode(std::string_view s);
std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(char32_t cp);

bool is_space(char32_t cp);
bool is_unicode_punctuation(char32_t cp);

std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& words, std::string_view sep = " ");
// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);
// Lowercases ASCII and the Latin-1 supplement.
std::string lowercase(std::string_view s);

}  // namespace csst::text
