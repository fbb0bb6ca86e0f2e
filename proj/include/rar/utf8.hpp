#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace rar::utf8 {

// Replaces every ill-formed sequence with U+FFFD.
std::string repair(std::string_view bytes);

void append(std::string& out, char32_t code_point);

std::size_t code_point_count(std::string_view text);

// Prefix of at most `max_code_points` code points; never splits a sequence.
std::string_view truncate(std::string_view text, std::size_t max_code_points);

// Length of the well-formed sequence starting at `text[pos]`, 0 if ill-formed.
std::size_t sequence_length(std::string_view text, std::size_t pos);

}  // namespace rar::utf8
