// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace conde {

/// Writes through a sibling temp file and renames it into place.
void atomic_write(const std::filesystem::path& path, std::string_view contents);
void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

std::string read_file(const std::filesystem::path& path);

/// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string> split(std::string_view s, char delim);
std::string_view trim(std::string_view s);

/// Line and column (1-based) of a byte offset in `text`.
std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset);

}  // namespace conde
