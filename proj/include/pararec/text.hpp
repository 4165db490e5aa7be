#pragma once

#include <string>
#include <vector>

namespace pararec {

// UTF-8 <-> Unicode scalar values. Decoding rejects malformed input.
std::u32string utf8_decode(const std::string& s);
std::string utf8_encode(const std::u32string& s);

bool is_space(char32_t c);

// Splits on runs of whitespace (space, tab, newline, carriage return).
std::vector<std::u32string> split_whitespace(const std::u32string& s);

// Splits a string into lines on '\n'.
std::vector<std::string> split_lines(const std::string& s);

std::string join_lines(const std::vector<std::string>& lines);

}  // namespace pararec
