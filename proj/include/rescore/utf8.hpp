// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rescore::utf8 {

/// Decodes UTF-8 into unicode scalar values. Throws DataError on malformed input.
std::u32string decode(std::string_view s);

void append(std::string& out, char32_t cp);
std::string encode(std::u32string_view cps);

/// Number of unicode scalar values; throws on malformed input.
std::size_t length(std::string_view s);

bool is_space(char32_t cp);
bool is_digit(char32_t cp);
bool is_upper(char32_t cp);
/// Letters of scripts without case distinction (Georgian Mkhedruli, CJK, Thai, ...).
bool is_caseless_letter(char32_t cp);

/// Collapses whitespace runs to single ASCII spaces and trims both ends.
std::string collapse_whitespace(std::string_view s);

/// Splits on unicode whitespace; empty pieces are dropped.
std::vector<std::u32string> split_whitespace(std::u32string_view s);

}  // namespace rescore::utf8
