#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtr {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shortest round-trip formatting (std::to_chars)
std::string format_double(double x);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// numeric list "0.4,0.5,0.6"; also supports arithmetic continuation
// "0,-0.1,...,-0.5" (step inferred from the first two entries)
std::vector<double> parse_number_list(const std::string& s);
// "start:stop:step"
std::vector<double> parse_grid_spec(const std::string& s);

// Line-oriented "key = value" file; '#' starts a comment. Repeated keys keep
// all occurrences in file order.
class KeyValueFile {
 public:
  static KeyValueFile from_file(const std::filesystem::path& p);
  static KeyValueFile from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws ConfigError if missing
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_all(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// temp file + rename so partially written outputs never appear under the
// final name
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data);

// linear-interpolation empirical quantile (R type 7); x need not be sorted
double quantile(std::vector<double> x, double p);

}  // namespace dtr
