#pragma once

// Cascade corpus: parsing, time-step bucketing, record filtering, recent
// stimuli, train/val/test and seed-set splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dydiff/embed.hpp"
#include "dydiff/graph.hpp"
#include "dydiff/numerics.hpp"

namespace dydiff {

struct Forward {
  UserId user = 0;
  double timestamp = 0.0;
  friend bool operator==(const Forward&, const Forward&) = default;
};

struct Cascade {
  std::string id;
  std::string text;
  std::vector<double> content_vec;  // empty until embedded
  bool precomputed = false;         // content_vec came from the input record
  std::vector<Forward> users;       // ascending timestamp, unique users
  int time_step = -1;

  std::vector<UserId> user_ids() const {
    std::vector<UserId> ids;
    ids.reserve(users.size());
    for (const Forward& f : users) ids.push_back(f.user);
    return ids;
  }
  Index length() const { return users.size(); }
};

// Sorts by timestamp (stable) and keeps the earliest forward of each user.
inline void canonicalize(Cascade& c) {
  std::stable_sort(c.users.begin(), c.users.end(),
                   [](const Forward& a, const Forward& b) { return a.timestamp < b.timestamp; });
  std::unordered_set<UserId> seen;
  std::erase_if(c.users, [&seen](const Forward& f) { return !seen.insert(f.user).second; });
}

inline Cascade cascade_from_json(const nlohmann::json& j) {
  Cascade c;
  c.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  if (j.contains("text") && !j.at("text").is_null()) c.text = j.at("text").get<std::string>();
  for (const auto& pair : j.at("users")) {
    if (!pair.is_array() || pair.size() != 2) throw std::invalid_argument("users entries must be [uid, ts]");
    const auto uid = pair[0].get<std::int64_t>();
    if (uid < 0 || uid > UINT32_MAX) throw std::invalid_argument("user id out of range");
    c.users.push_back({static_cast<UserId>(uid), pair[1].get<double>()});
  }
  if (j.contains("vec") && !j.at("vec").is_null()) {
    c.content_vec = j.at("vec").get<std::vector<double>>();
    c.precomputed = true;
  }
  canonicalize(c);
  return c;
}

inline nlohmann::json cascade_to_json(const Cascade& c, bool include_vec = false) {
  nlohmann::json users = nlohmann::json::array();
  for (const Forward& f : c.users) users.push_back({f.user, f.timestamp});
  nlohmann::json j = {{"id", c.id}, {"text", c.text}, {"users", std::move(users)}};
  if (include_vec || c.precomputed) j["vec"] = c.content_vec;
  return j;
}

inline std::vector<Cascade> load_cascades(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cascade file " + path.string());
  std::vector<Cascade> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(cascade_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void save_cascades(std::span<const Cascade> cascades, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cascade file " + path.string());
  for (const Cascade& c : cascades) out << cascade_to_json(c).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Splits [min first timestamp, max first timestamp] into n_steps equal
// half-open intervals (the last one closed) and assigns each cascade by its
// first timestamp.
inline void bucket_by_timestep(std::span<Cascade> cascades, int n_steps) {
  if (n_steps < 2) throw std::invalid_argument("bucket_by_timestep: need at least 2 steps");
  if (cascades.empty()) throw std::invalid_argument("bucket_by_timestep: no cascades");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Cascade& c : cascades) {
    if (c.users.empty()) throw std::invalid_argument("cascade " + c.id + " has no forwards");
    lo = std::min(lo, c.users.front().timestamp);
    hi = std::max(hi, c.users.front().timestamp);
  }
  if (!(hi > lo)) throw std::invalid_argument("bucket_by_timestep: all cascades share one timestamp");
  const double width = (hi - lo) / n_steps;
  for (Cascade& c : cascades) {
    const double offset = c.users.front().timestamp - lo;
    int step = static_cast<int>(std::floor(offset / width));
    c.time_step = std::clamp(step, 0, n_steps - 1);
  }
}

// Iteratively drops users with fewer than min_user_records forwards and
// cascades shorter than min_cascade_len until nothing changes.
inline std::vector<Cascade> filter_cascades(std::vector<Cascade> cascades, Index min_user_records,
                                            Index min_cascade_len) {
  for (;;) {
    std::unordered_map<UserId, Index> records;
    for (const Cascade& c : cascades) {
      for (const Forward& f : c.users) ++records[f.user];
    }
    bool changed = false;
    for (Cascade& c : cascades) {
      const auto before = c.users.size();
      std::erase_if(c.users, [&](const Forward& f) { return records[f.user] < min_user_records; });
      changed = changed || c.users.size() != before;
    }
    const auto before = cascades.size();
    std::erase_if(cascades, [&](const Cascade& c) { return c.users.size() < min_cascade_len || c.users.empty(); });
    changed = changed || cascades.size() != before;
    if (!changed) return cascades;
  }
}

struct CorpusConfig {
  int n_steps = 6;
  Index min_user_records = 10;
  Index min_cascade_len = 10;
  double val_fraction = 0.25;
  std::uint64_t split_seed = 0;
  Index dim = 128;
};

struct Corpus {
  SocialGraph graph;
  std::vector<Cascade> cascades;
  int n_steps = 0;
  Index dim = 0;
  std::vector<Index> train, val, test;  // indices into cascades

  Index n_users() const { return graph.n_users(); }
  int test_step() const { return n_steps - 1; }

  std::vector<Index> cascades_at(int step) const {
    std::vector<Index> out;
    for (Index i = 0; i < cascades.size(); ++i) {
      if (cascades[i].time_step == step) out.push_back(i);
    }
    return out;
  }
};

// Fills content_vec from text, or validates and renormalizes a supplied vector.
inline void embed_cascades(std::span<Cascade> cascades, Index dim) {
  for (Cascade& c : cascades) {
    if (c.precomputed) {
      if (c.content_vec.size() != dim) {
        throw DimensionError("cascade " + c.id + " carries a " + std::to_string(c.content_vec.size()) +
                             "-dimensional vector, model dimension is " + std::to_string(dim));
      }
      normalize_in_place(c.content_vec);
    } else {
      c.content_vec = embed_text(c.text, dim);
    }
  }
}

// Buckets, filters, embeds, strips users unseen in training from the final
// step, and splits the final step into validation and test.
inline Corpus prepare_corpus(SocialGraph graph, std::vector<Cascade> raw, const CorpusConfig& cfg) {
  for (const Cascade& c : raw) {
    for (const Forward& f : c.users) {
      if (f.user >= graph.n_users()) {
        throw std::invalid_argument("cascade " + c.id + " references user " + std::to_string(f.user) +
                                    " absent from a graph of " + std::to_string(graph.n_users()) + " users");
      }
    }
  }
  bucket_by_timestep(raw, cfg.n_steps);
  auto cascades = filter_cascades(std::move(raw), cfg.min_user_records, cfg.min_cascade_len);
  if (cascades.empty()) throw std::runtime_error("corpus is empty after filtering");
  embed_cascades(cascades, cfg.dim);

  const int last = cfg.n_steps - 1;
  std::unordered_set<UserId> seen_in_training;
  for (const Cascade& c : cascades) {
    if (c.time_step < last) {
      for (const Forward& f : c.users) seen_in_training.insert(f.user);
    }
  }
  for (Cascade& c : cascades) {
    if (c.time_step == last) {
      std::erase_if(c.users, [&](const Forward& f) { return !seen_in_training.contains(f.user); });
    }
  }

  Corpus corpus;
  corpus.graph = std::move(graph);
  corpus.cascades = std::move(cascades);
  corpus.n_steps = cfg.n_steps;
  corpus.dim = cfg.dim;
  std::vector<Index> final_step;
  for (Index i = 0; i < corpus.cascades.size(); ++i) {
    (corpus.cascades[i].time_step == last ? final_step : corpus.train).push_back(i);
  }
  std::mt19937_64 rng(cfg.split_seed);
  std::shuffle(final_step.begin(), final_step.end(), rng);
  const auto n_val = static_cast<Index>(std::llround(cfg.val_fraction * static_cast<double>(final_step.size())));
  corpus.val.assign(final_step.begin(), final_step.begin() + static_cast<std::ptrdiff_t>(n_val));
  corpus.test.assign(final_step.begin() + static_cast<std::ptrdiff_t>(n_val), final_step.end());
  std::sort(corpus.val.begin(), corpus.val.end());
  std::sort(corpus.test.begin(), corpus.test.end());
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& dir, const CorpusConfig& cfg) {
  return prepare_corpus(load_edges(dir / "edges.tsv"), load_cascades(dir / "cascades.jsonl"), cfg);
}

namespace detail {

inline Tensor mean_content_rows(const Corpus& corpus, int step_begin, int step_end) {
  Tensor x(corpus.n_users(), corpus.dim);
  for (const Cascade& c : corpus.cascades) {
    if (c.time_step < step_begin || c.time_step >= step_end) continue;
    for (const Forward& f : c.users) {
      auto row = x.row(f.user);
      for (Index k = 0; k < row.size(); ++k) row[k] += c.content_vec[k];
    }
  }
  for (Index i = 0; i < x.rows(); ++i) normalize_in_place(x.row(i));
  return x;
}

}  // namespace detail

// Row i is the renormalized mean content user i forwarded at step t-1, or zero.
inline Tensor recent_stimuli(const Corpus& corpus, int t) {
  if (t < 1 || t >= corpus.n_steps) {
    throw std::out_of_range("recent_stimuli: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(corpus.n_steps) + ")");
  }
  return detail::mean_content_rows(corpus, t - 1, t);
}

// Same aggregation over every step before t.
inline Tensor cumulative_stimuli(const Corpus& corpus, int t) {
  if (t < 1 || t >= corpus.n_steps) throw std::out_of_range("cumulative_stimuli: step out of range");
  return detail::mean_content_rows(corpus, 0, t);
}

struct SeedSplit {
  std::vector<UserId> observed;
  std::vector<UserId> hidden;
};

// The first ceil(seed_pct * K) users are observed, the rest hidden.
inline SeedSplit seed_split(std::span<const UserId> users, double seed_pct) {
  if (seed_pct < 0.0 || seed_pct > 0.5) throw std::invalid_argument("seed_pct must lie in [0, 0.5]");
  const auto k = static_cast<double>(users.size());
  auto n_obs = static_cast<Index>(std::ceil(seed_pct * k - 1e-9));
  n_obs = std::min<Index>(n_obs, users.size());
  SeedSplit s;
  s.observed.assign(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_obs));
  s.hidden.assign(users.begin() + static_cast<std::ptrdiff_t>(n_obs), users.end());
  return s;
}

}  // namespace dydiff
