#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace linkforge {

inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy maps 1:1 onto CLI exit codes: DataError -> 1, UsageError -> 2,
// NumericError -> 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One validation finding. `line` is 0 when the problem is not tied to a
// specific line; `id` names the offending object (video id, cue number, ...).
struct Diagnostic {
  std::string file;
  int line = 0;
  std::string id;
  std::string message;

  nlohmann::json to_json() const {
    return {{"file", file}, {"line", line}, {"id", id}, {"message", message}};
  }
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << body;
  if (!out) throw DataError("write failed: " + path.string());
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  const std::string body = read_text_file(path);
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Worker cap for the few parallel loops we have. Honors LINKFORGE_THREADS;
// defaults to 1 so runs are reproducible without any environment setup.
inline int thread_cap() {
  if (const char* env = std::getenv("LINKFORGE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// FNV-1a, used to stamp derived outputs (e.g. the HTML report embeds the
// checksum of the tree file it was rendered from).
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace linkforge
