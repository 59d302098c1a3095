#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace deepsd {

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// skipped; surrounding whitespace is trimmed. Duplicate keys keep the last
/// value. Throws ParseError on lines without '='.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "config");
KeyValues read_key_values(const std::filesystem::path& path);

double kv_double(const KeyValues& kv, const std::string& key, double fallback);
long long kv_int(const KeyValues& kv, const std::string& key, long long fallback);

}  // namespace deepsd
