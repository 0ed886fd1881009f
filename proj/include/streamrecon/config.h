#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace streamrecon {

// Flat "key = value" text. '#' starts a comment; repeated keys keep every
// value in file order.
class KeyValues {
 public:
  static KeyValues Parse(const std::string& text, const std::string& origin = "config");
  static KeyValues Load(const std::string& path);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  // Last value of a key; throws InputError when missing.
  const std::string& Get(const std::string& key) const;
  const std::vector<std::string>& All(const std::string& key) const;
  std::vector<std::string> Keys() const;

  double GetDouble(const std::string& key) const;
  double GetDouble(const std::string& key, double fallback) const;
  int GetInt(const std::string& key, int fallback) const;
  std::uint64_t GetUInt64(const std::string& key, std::uint64_t fallback) const;
  std::string GetString(const std::string& key, const std::string& fallback) const;
  // Whitespace separated numbers of a value.
  static std::vector<double> Numbers(const std::string& value, const std::string& key);

 private:
  std::string origin_;
  std::map<std::string, std::vector<std::string>> values_;
};

}  // namespace streamrecon
