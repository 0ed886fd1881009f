#include "streamrecon/config.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "streamrecon/common.h"

namespace streamrecon {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::Parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    STREAMRECON_CHECK_INPUT(eq != std::string::npos, origin, ":", number,
                            ": expected 'key = value'");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    STREAMRECON_CHECK_INPUT(!key.empty(), origin, ":", number, ": empty key");
    kv.values_[key].push_back(value);
  }
  return kv;
}

KeyValues KeyValues::Load(const std::string& path) {
  std::ifstream in(path);
  STREAMRECON_CHECK_INPUT(in.good(), "cannot open ", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), path);
}

const std::string& KeyValues::Get(const std::string& key) const {
  auto it = values_.find(key);
  STREAMRECON_CHECK_INPUT(it != values_.end(), origin_, ": missing key '", key, "'");
  return it->second.back();
}

const std::vector<std::string>& KeyValues::All(const std::string& key) const {
  static const std::vector<std::string> kEmpty;
  auto it = values_.find(key);
  return it == values_.end() ? kEmpty : it->second;
}

std::vector<std::string> KeyValues::Keys() const {
  std::vector<std::string> keys;
  for (const auto& [k, v] : values_) keys.push_back(k);
  return keys;
}

double KeyValues::GetDouble(const std::string& key) const {
  const std::string& s = Get(key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  STREAMRECON_CHECK_INPUT(used == s.size() && std::isfinite(v), origin_, ": key '", key,
                          "' is not a number: '", s, "'");
  return v;
}

double KeyValues::GetDouble(const std::string& key, double fallback) const {
  return Has(key) ? GetDouble(key) : fallback;
}

int KeyValues::GetInt(const std::string& key, int fallback) const {
  if (!Has(key)) return fallback;
  const double v = GetDouble(key);
  STREAMRECON_CHECK_INPUT(v == std::floor(v) && std::abs(v) < 2e9, origin_, ": key '",
                          key, "' must be an integer");
  return static_cast<int>(v);
}

std::uint64_t KeyValues::GetUInt64(const std::string& key, std::uint64_t fallback) const {
  if (!Has(key)) return fallback;
  const std::string& s = Get(key);
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  STREAMRECON_CHECK_INPUT(used == s.size() && !s.empty() && s[0] != '-', origin_,
                          ": key '", key, "' must be a non-negative integer");
  return v;
}

std::string KeyValues::GetString(const std::string& key, const std::string& fallback) const {
  return Has(key) ? Get(key) : fallback;
}

std::vector<double> KeyValues::Numbers(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    STREAMRECON_CHECK_INPUT(used == token.size() && std::isfinite(v), "key '", key,
                            "' has a non-numeric entry '", token, "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace streamrecon
