#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mlbias::text {

bool is_valid_utf8(std::string_view s);

// Decodes valid UTF-8 into code points. Behavior on invalid input is
// unspecified; check with is_valid_utf8 first.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

// Simple case mapping covering ASCII, Latin-1, Latin Extended-A, Greek and
// Cyrillic. Enough for the European languages the toolkit ships data for.
char32_t to_lower(char32_t c);
std::string to_lower(std::string_view s);
bool is_upper(char32_t c);

bool is_punctuation(char32_t c);
bool is_space(char32_t c);

struct Token {
  std::string text;  // original case
  bool punctuation = false;
};

// Splits on whitespace; punctuation characters become single-character
// tokens. Apostrophes and hyphens between letters stay inside the word.
std::vector<Token> tokenize(std::string_view s);

// True when the token's first code point is an uppercase letter.
bool is_capitalized(std::string_view token);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Reads a UTF-8 table file: strips trailing '\r', skips blank lines and
// lines whose first non-space character is '#'. Returns (line number, fields).
struct TableRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<TableRow> read_table(const std::filesystem::path& path, char sep = '\t');

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mlbias::text
