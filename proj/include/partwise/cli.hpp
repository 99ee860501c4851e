#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "partwise/distill.hpp"
#include "partwise/fewshot.hpp"
#include "partwise/synthdata.hpp"

namespace partwise {

/// Flat key/value run configuration. Keys are kebab-case and double as flag
/// names; every key has a default, and unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Throws ConfigError for an unknown key.
  void set(const std::string& key, const std::string& value);
  [[nodiscard]] const std::string& get(const std::string& key) const;

  /// Applies "key = value" lines; '#' starts a comment.
  void merge_file(const std::filesystem::path& path);
  /// The resolved configuration in the same format merge_file() reads.
  [[nodiscard]] std::string render() const;

  [[nodiscard]] static const std::vector<std::pair<std::string, std::string>>& schema();  // key, help

  [[nodiscard]] double real(const std::string& key) const;
  [[nodiscard]] std::size_t count(const std::string& key) const;
  [[nodiscard]] std::uint64_t u64(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;

  [[nodiscard]] GenConfig gen() const;
  [[nodiscard]] EncoderConfig encoder() const;
  [[nodiscard]] DistillConfig distill() const;
  [[nodiscard]] LossWeights weights() const;
  [[nodiscard]] AugmentConfig augment() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Runs one `partwise` invocation. args excludes the program name. Returns
/// the process exit code: 0 success, 2 configuration error, 3 numeric
/// failure, 4 I/O error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partwise
