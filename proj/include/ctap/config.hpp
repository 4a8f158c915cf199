#ifndef CTAP_CONFIG_HPP
#define CTAP_CONFIG_HPP

// Flat key=value configuration shared by every subcommand.
//
// File syntax: one `key = value` per line, `#` starts a comment, blank lines
// are ignored. Every key has a default (see Config::defaults()); unknown keys
// are rejected.

#include <map>
#include <stdexcept>
#include <string>

namespace ctap {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  Config();

  static const std::map<std::string, std::string>& defaults();

  static Config from_file(const std::string& path);
  static Config parse(const std::string& text);

  // Applies "key=value"; throws ConfigError for unknown keys or bad syntax.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  long long get_int64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Effective configuration, sorted by key, in file syntax.
  std::string dump() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ctap

#endif  // CTAP_CONFIG_HPP
