// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

namespace langtrack {

// Flat key=value configuration with dotted keys (model.d=64, tracker.n_m=5).
// '#' starts a comment; blank lines are ignored; later keys override earlier.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string str(const std::string& key) const;  // throws when absent
  std::string str(const std::string& key, const std::string& def) const;
  double num(const std::string& key) const;
  double num(const std::string& key, double def) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long def) const;
  bool flag(const std::string& key, bool def) const;

  // Sorted key=value lines, one per entry; parses back to an equal config.
  std::string dump() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  // Other's entries override this config's entries.
  void merge(const Config& other);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace langtrack
