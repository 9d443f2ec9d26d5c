#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace deqsci {

struct ConfigKey {
  std::string name;
  std::string default_value;
  /// real, int, u64, bool, reals, str, list, or a|b|c for a fixed choice.
  std::string type;
  std::string help;
};

/// Flat key = value run configuration. Keys are dotted (solver.tol,
/// train.epochs, ...); every key has a default and unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey> &keys();
  static bool known(const std::string &key);

  /// Throws Config naming the key when it is unknown.
  void set(const std::string &key, const std::string &value);
  const std::string &get(const std::string &key) const;

  std::string str(const std::string &key) const { return get(key); }
  double real(const std::string &key) const;
  long long integer(const std::string &key) const;
  std::uint64_t u64(const std::string &key) const;
  bool flag(const std::string &key) const;
  /// '/'-separated reals.
  std::vector<double> reals(const std::string &key) const;
  /// ','-separated strings.
  std::vector<std::string> list(const std::string &key) const;

  /// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
  void load_text(const std::string &text, const std::string &origin = "<config>");
  void load_file(const std::string &path);
  /// Every key in registry order, one "key = value" per line.
  std::string dump() const;

  /// Typed reads of every key, so bad values surface before a command runs.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace deqsci
