#include "deepsd/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "deepsd/errors.hpp"

namespace deepsd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(ParseError::Kind::kSyntax,
                       origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ParseError(ParseError::Kind::kSyntax,
                       origin + ":" + std::to_string(lineno) + ": empty key");
    }
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ParseError(ParseError::Kind::kSyntax, "bad number for " + key + ": " + it->second);
  }
}

long long kv_int(const KeyValues& kv, const std::string& key, long long fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  long long v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(ParseError::Kind::kSyntax, "bad integer for " + key + ": " + s);
  }
  return v;
}

}  // namespace deepsd
