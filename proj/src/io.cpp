#include "dtr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dtr {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

static double parse_double_strict(const std::string& tok, const std::string& ctx) {
  const std::string t = trim(tok);
  if (t.empty()) throw ParseError("empty number in " + ctx);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw ParseError("bad number '" + t + "' in " + ctx);
  return v;
}

std::vector<double> parse_number_list(const std::string& s) {
  auto toks = split(s, ',');
  std::vector<double> out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (trim(toks[i]) == "...") {
      if (out.size() < 2 || i + 1 != toks.size() - 1)
        throw ParseError("'...' needs two leading values and one trailing value: " + s);
      double step = out[1] - out[0];
      double stop = parse_double_strict(toks[i + 1], s);
      if (step == 0.0) throw ParseError("zero step in list " + s);
      double cur = out.back() + step;
      int guard = 0;
      while ((step > 0 ? cur < stop - 1e-12 : cur > stop + 1e-12) && ++guard < 100000) {
        out.push_back(cur);
        cur += step;
      }
      out.push_back(stop);
      return out;
    }
    out.push_back(parse_double_strict(toks[i], s));
  }
  return out;
}

std::vector<double> parse_grid_spec(const std::string& s) {
  auto toks = split(s, ':');
  if (toks.size() != 3) throw ParseError("grid spec must be start:stop:step, got " + s);
  double start = parse_double_strict(toks[0], s);
  double stop = parse_double_strict(toks[1], s);
  double step = parse_double_strict(toks[2], s);
  if (step <= 0 || stop < start) throw ParseError("bad grid spec " + s);
  std::vector<double> out;
  for (double t = start; t <= stop + 1e-9 * step; t += step) out.push_back(t);
  return out;
}

KeyValueFile KeyValueFile::from_string(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
    kv.entries_.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::from_file(const std::filesystem::path& p) {
  return from_string(read_file(p));
}

bool KeyValueFile::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == key; });
}

std::string KeyValueFile::get(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.first == key) return e.second;
  throw ConfigError("missing key '" + key + "'");
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  for (const auto& e : entries_)
    if (e.first == key) return e.second;
  return fallback;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return parse_double_strict(get(key), "key " + key);
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  return static_cast<int>(parse_double_strict(get(key), "key " + key));
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' is not a boolean: " + v);
}

std::vector<std::string> KeyValueFile::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.first == key) out.push_back(e.second);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of empty vector");
  if (p < 0.0) p = 0.0;
  if (p > 1.0) p = 1.0;
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace dtr
