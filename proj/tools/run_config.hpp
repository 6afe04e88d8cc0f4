#ifndef STPP_TOOLS_RUN_CONFIG_HPP
#define STPP_TOOLS_RUN_CONFIG_HPP

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stpp::cli {

enum class KeyType { Real, PositiveReal, Count, PositiveCount, Flag, Text, RealList };

struct KeySpec {
  std::string key;
  KeyType type;
  std::string fallback;  // default, as it would be written in a config file
  std::string help;
  std::vector<std::string> choices = {};  // Text keys only; empty means free text
};

// Flat dotted keys, every one with a default. Values are validated when set.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<KeySpec>& keys();
  static const KeySpec& spec(const std::string& key);

  // `origin` names the source in error messages ("--train.lr", "run.cfg line 3").
  void set(const std::string& key, const std::string& value, const std::string& origin);
  // `key = value` lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);

  const std::string& text(const std::string& key) const;
  double real(const std::string& key) const;
  long count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  bool is_default(const std::string& key) const;

  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace stpp::cli

#endif  // STPP_TOOLS_RUN_CONFIG_HPP
