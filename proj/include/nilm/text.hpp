// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nilm {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Fixed-point with the given number of decimals, for human-readable tables.
std::string format_fixed(double value, int decimals);

std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

/// Strict parses: the whole string must be consumed.
std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);
std::optional<std::uint64_t> parse_uint(std::string_view text);

}  // namespace nilm
