#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sftmn {

/// Flat ordered `key=value` list. Text form: one pair per line, `#` starts a
/// comment, surrounding whitespace is ignored.
class KeyValues {
 public:
  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws ParseError if absent

  std::string get_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  unsigned long long get_uint64(const std::string& key) const;
  double get_double(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_text() const;
  static KeyValues parse(const std::string& text);
  static KeyValues read_file(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace sftmn
