// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace rescore::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Compact dump with sorted keys (nlohmann's object is a std::map), so equal
/// values always hash equally.
std::string canonical_json(const nlohmann::json& j);
std::string json_hash(const nlohmann::json& j);

}  // namespace rescore::io
