#pragma once

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/config.hpp"
#include "fairrec/eval.hpp"

namespace fairrec {

// Provenance record written next to every command's outputs: what ran, with
// which configuration, over which inputs (by content hash), producing which
// files. Timestamps are informational; byte-identity checks compare the
// artifacts themselves, not the manifest.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  RunConfig config;
  std::vector<std::pair<std::string, std::string>> inputs;  // (name, content hash)
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;
};

namespace detail {

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char raw : s) {
    unsigned char c = static_cast<unsigned char>(raw);
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          std::ostringstream os;
          os << "\\u" << std::hex << std::setw(4) << std::setfill('0') << static_cast<int>(c);
          out += os.str();
        } else {
          out += raw;
        }
    }
  }
  return out;
}

inline std::string json_string(const std::string& s) { return "\"" + json_escape(s) + "\""; }

// Strips the leading "# " of a report convention line for reuse in JSON.
inline std::string convention_text(const char* line) {
  std::string s = line;
  return s.rfind("# ", 0) == 0 ? s.substr(2) : s;
}

}  // namespace detail

inline std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  std::string bytes = buf.str();
  std::uint64_t h = fnv1a(bytes);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string iso_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string manifest_json(const Manifest& m) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"command\": " << detail::json_string(m.command) << ",\n";
  os << "  \"argv\": [";
  for (std::size_t i = 0; i < m.argv.size(); ++i) {
    if (i) os << ", ";
    os << detail::json_string(m.argv[i]);
  }
  os << "],\n";
  os << "  \"started\": " << detail::json_string(m.started) << ",\n";
  os << "  \"finished\": " << detail::json_string(m.finished) << ",\n";
  os << "  \"config\": {\n";
  auto items = config_items(m.config);
  for (std::size_t i = 0; i < items.size(); ++i) {
    os << "    " << detail::json_string(items[i].first) << ": "
       << detail::json_string(items[i].second) << (i + 1 < items.size() ? "," : "") << "\n";
  }
  os << "  },\n";
  os << "  \"inputs\": {\n";
  for (std::size_t i = 0; i < m.inputs.size(); ++i) {
    os << "    " << detail::json_string(m.inputs[i].first) << ": "
       << detail::json_string(m.inputs[i].second) << (i + 1 < m.inputs.size() ? "," : "") << "\n";
  }
  os << "  },\n";
  os << "  \"outputs\": [";
  for (std::size_t i = 0; i < m.outputs.size(); ++i) {
    if (i) os << ", ";
    os << detail::json_string(m.outputs[i]);
  }
  os << "],\n";
  os << "  \"conventions\": {\n";
  os << "    \"exposure_ratio\": "
     << detail::json_string(detail::convention_text(detail::kErConvention)) << ",\n";
  os << "    \"rnd\": " << detail::json_string(detail::convention_text(detail::kRndConvention))
     << "\n";
  os << "  }\n";
  os << "}\n";
  return os.str();
}

inline void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << manifest_json(m);
}

}  // namespace fairrec
