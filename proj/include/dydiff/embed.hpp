#pragma once

// Content-to-vector mapping: signed feature hashing of a bag of tokens, plus a
// passthrough store for externally computed embeddings.
//
// Hashing contract (normative, bit-exact):
//   tokens  = maximal runs of ASCII [a-z0-9] after ASCII lowercasing; every
//             other byte (including all bytes >= 0x80) separates tokens
//   h       = FNV-1a 64 over the token bytes
//   coord   = h mod d
//   sign    = -1 if bit 63 of h is set, else +1
//   vec     = L2-normalized sum of sign * e_coord over all tokens (zero if none)

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dydiff/numerics.hpp"

namespace dydiff {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Scales v to unit L2 norm; an all-zero vector stays zero.
inline void normalize_in_place(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s == 0.0) return;
  const double inv = 1.0 / std::sqrt(s);
  for (double& x : v) x *= inv;
}

inline std::vector<double> embed_text(std::string_view text, Index d) {
  if (d < 2) throw DimensionError("embedding dimension must be >= 2");
  std::vector<double> vec(d, 0.0);
  for (const std::string& tok : tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok);
    vec[h % d] += (h >> 63) ? -1.0 : 1.0;
  }
  normalize_in_place(vec);
  return vec;
}

// Reads {"id", "vec"} JSON lines; every vector must have dimension d and is
// renormalized to unit length (zero vectors are kept as zero).
inline std::map<std::string, std::vector<double>> load_precomputed(const std::filesystem::path& path,
                                                                   Index d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::string id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    auto vec = j.at("vec").get<std::vector<double>>();
    if (vec.size() != d) {
      throw DimensionError(path.string() + ":" + std::to_string(line_no) + ": vector for '" + id +
                           "' has dimension " + std::to_string(vec.size()) + ", expected " +
                           std::to_string(d));
    }
    normalize_in_place(vec);
    out[std::move(id)] = std::move(vec);
  }
  return out;
}

}  // namespace dydiff
