#pragma once

// Run metadata embedded in every output file, and small CSV helpers.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "params.hpp"

namespace optomech {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Everything needed to regenerate an output: command, seed, full parameter
/// set and command options.
struct RunMetadata {
  std::string command;
  std::uint64_t seed = 0;
  std::string config;                        // to_config() text
  std::map<std::string, std::string> options; // command-line options

  [[nodiscard]] std::string canonical() const {
    std::ostringstream os;
    os << "command=" << command << '\n' << "seed=" << seed << '\n' << config;
    for (const auto& [k, v] : options) os << "opt." << k << '=' << v << '\n';
    return os.str();
  }
  [[nodiscard]] std::string hash() const { return hex64(fnv1a(canonical())); }

  /// '#'-prefixed header block.
  [[nodiscard]] std::string header() const {
    std::ostringstream os;
    os << "# optomech run\n# config_hash=" << hash() << "\n# command=" << command << "\n# seed=" << seed << '\n';
    std::istringstream cfg(config);
    for (std::string line; std::getline(cfg, line);)
      if (!line.empty()) os << "# cfg " << line << '\n';
    for (const auto& [k, v] : options) os << "# opt " << k << '=' << v << '\n';
    return os.str();
  }
};

/// Reads the metadata block back from any file written with header().
inline RunMetadata read_metadata(std::istream& in) {
  RunMetadata m;
  bool seen = false;
  std::ostringstream cfg;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# ", 0) != 0) {
      if (seen) break;
      continue;
    }
    const std::string body = line.substr(2);
    if (body == "optomech run") seen = true;
    else if (body.rfind("command=", 0) == 0) m.command = body.substr(8);
    else if (body.rfind("seed=", 0) == 0) m.seed = std::stoull(body.substr(5));
    else if (body.rfind("cfg ", 0) == 0) cfg << body.substr(4) << '\n';
    else if (body.rfind("opt ", 0) == 0) {
      const std::string kv = body.substr(4);
      const auto eq = kv.find('=');
      if (eq != std::string::npos) m.options[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }
  if (!seen) throw std::runtime_error("no optomech metadata block found");
  m.config = cfg.str();
  return m;
}

inline RunMetadata read_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_metadata(in);
}

/// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string row;
  for (std::size_t i = 0; i < fields.size(); ++i) row += (i ? "," : "") + csv_field(fields[i]);
  return row;
}

} // namespace optomech
