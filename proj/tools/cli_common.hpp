#pragma once

// Shared plumbing for the pam-curator subcommands: config files, input
// lookup, label tables and the invocation log.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamcurator/core/csv.hpp"
#include "pamcurator/core/error.hpp"
#include "pamcurator/core/io.hpp"
#include "pamcurator/core/time.hpp"

namespace pam::cli {

namespace fs = std::filesystem;

inline std::optional<fs::path> env_path(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

/// Relative inputs that do not exist under the working directory are looked
/// up under $PAM_DATA_DIR.
inline fs::path input_path(const fs::path& p) {
  if (p.empty() || p.is_absolute() || fs::exists(p)) return p;
  if (const auto data = env_path("PAM_DATA_DIR")) {
    const auto candidate = *data / p;
    if (fs::exists(candidate)) return candidate;
  }
  return p;
}

inline fs::path existing_input(const fs::path& p, const std::string& what) {
  const auto resolved = input_path(p);
  if (!fs::exists(resolved)) throw NotFoundError(what + " '" + p.string() + "' not found");
  return resolved;
}

/// `--config` accepts a JSON file or an inline JSON object.
inline nlohmann::json load_config(const std::string& arg) {
  if (arg.empty()) return nlohmann::json::object();
  nlohmann::json j;
  try {
    const auto first = arg.find_first_not_of(" \t\n");
    j = nlohmann::json::parse(first != std::string::npos && arg[first] == '{' ? arg
                                                                             : read_file_text(existing_input(arg, "config")));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  return j;
}

/// Removes and returns `key` from a config object (null when absent).
inline nlohmann::json take(nlohmann::json& cfg, const std::string& key) {
  if (!cfg.contains(key)) return nullptr;
  auto v = cfg[key];
  cfg.erase(key);
  return v;
}

inline void reject_leftovers(const nlohmann::json& cfg, const std::string& command) {
  for (const auto& [k, _] : cfg.items()) throw ArgumentError(command + ": unknown config key '" + k + "'");
}

inline std::string shell_quote(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_./=:,+@") == std::string::npos)
    return s;
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// Prints the command line with its effective seed and resolved settings
/// to stderr; with $PAM_CACHE_DIR set, also appends it to commands.jsonl there.
inline void log_invocation(const std::vector<std::string>& argv, std::uint64_t seed, const nlohmann::json& resolved) {
  std::string line;
  for (const auto& a : argv) line += (line.empty() ? "" : " ") + shell_quote(a);
  std::cerr << "[pam-curator] " << line << "  # seed=" << seed << '\n';
  const auto cache = env_path("PAM_CACHE_DIR");
  if (!cache) return;
  fs::create_directories(*cache);
  const auto now = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  const nlohmann::json rec = {{"at", format_timestamp(now)}, {"cwd", fs::current_path().string()}, {"argv", argv},
                              {"seed", seed}, {"resolved", resolved}};
  std::FILE* f = std::fopen((*cache / "commands.jsonl").c_str(), "ab");
  if (!f) throw DataError("cannot append to " + (*cache / "commands.jsonl").string());
  const auto text = rec.dump() + "\n";
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

// ---------------------------------------------------------------- CSV tables

/// CSV with a header row, addressed by column name.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }

  std::size_t require(const std::string& name, const std::string& what) const {
    const auto c = column(name);
    if (!c) throw DataError(what + ": missing column '" + name + "'");
    return *c;
  }
};

inline Table read_table(const fs::path& path, const std::string& what) {
  auto rows = csv::parse(read_file_text(existing_input(path, what)));
  if (rows.empty()) throw DataError(what + ": empty file");
  Table t;
  t.header = std::move(rows.front());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() == 1 && rows[i][0].empty()) continue;
    if (rows[i].size() != t.header.size())
      throw DataError(what + ": row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) + " fields");
    t.rows.push_back(std::move(rows[i]));
  }
  return t;
}

/// sample_id -> value of `value_col`; duplicate ids are a data error.
inline std::map<std::string, std::string> keyed_column(const Table& t, const std::string& value_col, const std::string& what) {
  const auto id = t.require("sample_id", what), v = t.require(value_col, what);
  std::map<std::string, std::string> out;
  for (const auto& r : t.rows)
    if (!out.emplace(r[id], r[v]).second) throw DataError(what + ": duplicate sample_id '" + r[id] + "'");
  return out;
}

/// 1 / 0 for binary spellings, nullopt for anything else.
inline std::optional<int> binary_label(const std::string& s) {
  if (s == "1" || s == "positive" || s == "true" || s == "pos") return 1;
  if (s == "0" || s == "negative" || s == "false" || s == "neg") return 0;
  return std::nullopt;
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "unlabeled"; }

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(what + ": '" + s + "' is not a number");
  }
}

}  // namespace pam::cli
