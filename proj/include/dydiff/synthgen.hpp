#pragma once

// Synthetic corpora with planted, drifting user interests. Users live in
// communities on a directed graph; interests drift by retaining their past
// value, mixing with influencers and picking up noise. Cascades recruit users
// whose current interests align with a topic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "dydiff/data.hpp"
#include "dydiff/graph.hpp"
#include "dydiff/numerics.hpp"

namespace dydiff {

struct GenConfig {
  Index n_users = 500;
  Index n_communities = 4;
  Index d_latent = 16;
  int n_steps = 6;
  double drift_retain = 0.8;   // gamma
  double drift_social = 0.15;  // delta
  double drift_noise = 0.05;   // eta
  Index cascades_per_step = 40;
  Index cascade_len = 15;
  double avg_degree = 8.0;       // expected out-degree
  double intra_fraction = 0.8;   // share of expected degree inside the community
  double interest_noise = 0.6;   // spread of initial interests around the centroid
  double topic_noise = 0.3;
  double acceptance_sharpness = 10.0;
  Index min_user_records = 10;   // activity floor, 0 disables
  double step_width = 1000.0;
  std::uint64_t seed = 7;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("gen config: " + m); };
    if (n_users < 2) fail("n_users must be >= 2");
    if (n_communities < 1 || n_communities > n_users) fail("n_communities must lie in [1, n_users]");
    if (d_latent < 1) fail("d_latent must be >= 1");
    if (n_steps < 2) fail("n_steps must be >= 2");
    for (double v : {drift_retain, drift_social}) {
      if (v < 0.0 || v > 1.0) fail("drift weights must lie in [0, 1]");
    }
    if (drift_retain + drift_social > 1.0 + 1e-12) fail("drift_retain + drift_social must be <= 1");
    if (drift_noise < 0.0) fail("drift_noise must be >= 0");
    if (cascades_per_step < 1) fail("cascades_per_step must be >= 1");
    if (cascade_len < 10) fail("cascade_len must be >= 10");
    if (cascade_len > n_users) fail("cascade_len exceeds n_users");
    if (avg_degree < 1.0) fail("avg_degree yields an expected degree below 1");
    if (intra_fraction < 0.0 || intra_fraction > 1.0) fail("intra_fraction must lie in [0, 1]");
    if (step_width <= 0.0) fail("step_width must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"n_users", n_users},
            {"n_communities", n_communities},
            {"d_latent", d_latent},
            {"n_steps", n_steps},
            {"drift_retain", drift_retain},
            {"drift_social", drift_social},
            {"drift_noise", drift_noise},
            {"cascades_per_step", cascades_per_step},
            {"cascade_len", cascade_len},
            {"avg_degree", avg_degree},
            {"intra_fraction", intra_fraction},
            {"interest_noise", interest_noise},
            {"topic_noise", topic_noise},
            {"acceptance_sharpness", acceptance_sharpness},
            {"min_user_records", min_user_records},
            {"step_width", step_width},
            {"seed", seed}};
  }
};

inline Index community_of(const GenConfig& cfg, Index user) { return user * cfg.n_communities / cfg.n_users; }

struct EdgeProbabilities {
  double p_in = 0.0;
  double p_out = 0.0;
};

// p_in and p_out chosen so the expected out-degree is avg_degree with
// intra_fraction of it inside the community (equal-size communities assumed).
inline EdgeProbabilities edge_probabilities(const GenConfig& cfg) {
  const double n = static_cast<double>(cfg.n_users);
  const double s = n / static_cast<double>(cfg.n_communities);
  EdgeProbabilities p;
  p.p_in = s > 1.0 ? cfg.intra_fraction * cfg.avg_degree / (s - 1.0) : 0.0;
  p.p_out = n > s ? (1.0 - cfg.intra_fraction) * cfg.avg_degree / (n - s) : 0.0;
  if (p.p_in > 1.0 || p.p_out > 1.0) throw std::invalid_argument("gen config: avg_degree too large for the community sizes");
  return p;
}

inline SocialGraph gen_graph(const GenConfig& cfg) {
  cfg.validate();
  const EdgeProbabilities p = edge_probabilities(cfg);
  std::mt19937_64 rng(mix_seed(cfg.seed, 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (Index src = 0; src < cfg.n_users; ++src) {
    for (Index dst = 0; dst < cfg.n_users; ++dst) {
      if (src == dst) continue;
      const double prob = community_of(cfg, src) == community_of(cfg, dst) ? p.p_in : p.p_out;
      if (unif(rng) < prob) edges.push_back({static_cast<UserId>(src), static_cast<UserId>(dst)});
    }
  }
  return SocialGraph(cfg.n_users, std::move(edges));
}

struct GroundTruth {
  std::vector<Tensor> interests;             // per step, n_users x d_latent, unit rows
  std::vector<std::vector<double>> topics;   // per emitted cascade
  std::vector<Index> communities;
};

namespace detail {

inline void normalize_rows(Tensor& t) {
  for (Index i = 0; i < t.rows(); ++i) normalize_in_place(t.row(i));
}

inline std::vector<double> gaussian_vector(Index d, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(d);
  for (double& x : v) x = normal(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace detail

// Z[0] = normalize(centroid + noise);
// Z[t] = normalize(gamma Z[t-1] + delta mean_{influencers and self} Z[t-1] + eta xi), xi ~ N(0, I/d) so E|xi| is about 1.
inline std::vector<Tensor> gen_interests(const GenConfig& cfg, const SocialGraph& g) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.seed, 2));
  const Index d = cfg.d_latent;
  const double unit_scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<std::vector<double>> centroids;
  for (Index c = 0; c < cfg.n_communities; ++c) {
    auto v = detail::gaussian_vector(d, 1.0, rng);
    normalize_in_place(v);
    centroids.push_back(std::move(v));
  }
  std::vector<Tensor> z;
  Tensor z0(cfg.n_users, d);
  for (Index u = 0; u < cfg.n_users; ++u) {
    const auto noise = detail::gaussian_vector(d, cfg.interest_noise * unit_scale, rng);
    const auto& c = centroids[community_of(cfg, u)];
    auto row = z0.row(u);
    for (Index k = 0; k < d; ++k) row[k] = c[k] + noise[k];
  }
  detail::normalize_rows(z0);
  z.push_back(std::move(z0));
  for (int t = 1; t < cfg.n_steps; ++t) {
    const Tensor& prev = z.back();
    Tensor next(cfg.n_users, d);
    for (Index u = 0; u < cfg.n_users; ++u) {
      const auto& inf = g.influencers(static_cast<UserId>(u));
      std::vector<double> social(prev.row(u).begin(), prev.row(u).end());
      for (UserId v : inf) {
        for (Index k = 0; k < d; ++k) social[k] += prev(v, k);
      }
      const double denom = static_cast<double>(inf.size() + 1);
      const auto noise = detail::gaussian_vector(d, unit_scale, rng);
      auto row = next.row(u);
      for (Index k = 0; k < d; ++k) {
        row[k] = cfg.drift_retain * prev(u, k) + cfg.drift_social * social[k] / denom + cfg.drift_noise * noise[k];
      }
    }
    detail::normalize_rows(next);
    z.push_back(std::move(next));
  }
  return z;
}

// Tokens named after the topic's strongest coordinates, repeated by weight.
inline std::string topic_text(std::span<const double> topic, std::mt19937_64& rng) {
  std::vector<Index> order(topic.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return std::abs(topic[a]) > std::abs(topic[b]) || (std::abs(topic[a]) == std::abs(topic[b]) && a < b); });
  std::string text;
  const Index top = std::min<Index>(4, order.size());
  for (Index i = 0; i < top; ++i) {
    const Index c = order[i];
    const int reps = std::max(1, static_cast<int>(std::lround(std::abs(topic[c]) * 6.0)));
    const std::string tok = "topic" + std::to_string(c) + (topic[c] >= 0 ? "pos" : "neg");
    for (int r = 0; r < reps; ++r) text += (text.empty() ? "" : " ") + tok;
  }
  std::uniform_int_distribution<int> filler(0, 999);
  text += " filler" + std::to_string(filler(rng));
  return text;
}

struct SynthCorpus {
  GenConfig config;
  SocialGraph graph;
  std::vector<Cascade> cascades;
  GroundTruth truth;
  std::vector<int> steps;  // generating step per cascade
  Index dropped = 0;
};

namespace detail {

struct Draft {
  int step = 0;
  double start = 0.0;
  std::vector<double> topic;
  std::vector<UserId> members;  // author first
};

inline void assign_timestamps(const GenConfig& cfg, const Tensor& z, Draft& d, Cascade& c, std::mt19937_64& rng) {
  const UserId author = d.members.front();
  std::vector<std::pair<double, UserId>> rest;
  for (Index i = 1; i < d.members.size(); ++i) {
    rest.emplace_back(dot(z.row(d.members[i]), d.topic), d.members[i]);
  }
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  const double spacing = cfg.step_width * 1e-3;
  std::uniform_real_distribution<double> jitter(0.0, 0.5 * spacing);
  c.users.clear();
  c.users.push_back({author, d.start});
  for (Index r = 0; r < rest.size(); ++r) {
    c.users.push_back({rest[r].second, d.start + static_cast<double>(r + 1) * spacing + jitter(rng)});
  }
}

}  // namespace detail

// Recruits users by descending affinity with logistic acceptance; drafts that
// cannot reach cascade_len within three passes are dropped with a warning.
inline SynthCorpus gen_corpus(const GenConfig& cfg) {
  cfg.validate();
  SynthCorpus out;
  out.config = cfg;
  out.graph = gen_graph(cfg);
  out.truth.interests = gen_interests(cfg, out.graph);
  for (Index u = 0; u < cfg.n_users; ++u) out.truth.communities.push_back(community_of(cfg, u));

  std::mt19937_64 rng(mix_seed(cfg.seed, 3));
  std::uniform_int_distribution<Index> pick_user(0, cfg.n_users - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double unit_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_latent));
  std::vector<detail::Draft> drafts;
  for (int t = 0; t < cfg.n_steps; ++t) {
    const Tensor& z = out.truth.interests[static_cast<Index>(t)];
    for (Index j = 0; j < cfg.cascades_per_step; ++j) {
      detail::Draft d;
      d.step = t;
      d.start = t * cfg.step_width + unif(rng) * 0.5 * cfg.step_width;
      const auto author = static_cast<UserId>(pick_user(rng));
      d.topic = detail::gaussian_vector(cfg.d_latent, cfg.topic_noise * unit_scale, rng);
      for (Index k = 0; k < cfg.d_latent; ++k) d.topic[k] += z(author, k);
      normalize_in_place(d.topic);

      std::vector<std::pair<double, UserId>> by_affinity;
      for (Index u = 0; u < cfg.n_users; ++u) {
        if (u != author) by_affinity.emplace_back(detail::dot(z.row(u), d.topic), static_cast<UserId>(u));
      }
      std::sort(by_affinity.begin(), by_affinity.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      d.members = {author};
      std::unordered_set<UserId> in{author};
      for (int pass = 0; pass < 3 && d.members.size() < cfg.cascade_len; ++pass) {
        for (const auto& [aff, u] : by_affinity) {
          if (d.members.size() >= cfg.cascade_len) break;
          if (in.contains(u)) continue;
          if (unif(rng) < detail::stable_sigmoid(cfg.acceptance_sharpness * aff)) {
            d.members.push_back(u);
            in.insert(u);
          }
        }
      }
      if (d.members.size() < cfg.cascade_len) {
        std::cerr << "warning: dropped cascade at step " << t << " with " << d.members.size() << " users\n";
        ++out.dropped;
        continue;
      }
      drafts.push_back(std::move(d));
    }
  }

  // Top up inactive users into the cascades whose topics suit them best.
  if (cfg.min_user_records > 0 && !drafts.empty()) {
    std::vector<Index> records(cfg.n_users, 0);
    for (const auto& d : drafts) {
      for (UserId u : d.members) ++records[u];
    }
    for (Index u = 0; u < cfg.n_users; ++u) {
      if (records[u] >= cfg.min_user_records) continue;
      std::vector<std::pair<double, Index>> fits;
      for (Index j = 0; j < drafts.size(); ++j) {
        const auto& m = drafts[j].members;
        if (std::find(m.begin(), m.end(), static_cast<UserId>(u)) != m.end()) continue;
        const Tensor& z = out.truth.interests[static_cast<Index>(drafts[j].step)];
        fits.emplace_back(detail::dot(z.row(u), drafts[j].topic), j);
      }
      std::sort(fits.begin(), fits.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      for (Index k = 0; k < fits.size() && records[u] < cfg.min_user_records; ++k) {
        drafts[fits[k].second].members.push_back(static_cast<UserId>(u));
        ++records[u];
      }
    }
  }

  for (Index j = 0; j < drafts.size(); ++j) {
    Cascade c;
    c.id = "c" + std::to_string(j);
    c.text = topic_text(drafts[j].topic, rng);
    detail::assign_timestamps(cfg, out.truth.interests[static_cast<Index>(drafts[j].step)], drafts[j], c, rng);
    out.cascades.push_back(std::move(c));
    out.truth.topics.push_back(drafts[j].topic);
    out.steps.push_back(drafts[j].step);
  }
  return out;
}

inline nlohmann::json ground_truth_json(const SynthCorpus& s) {
  nlohmann::json interests = nlohmann::json::array();
  for (const Tensor& z : s.truth.interests) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < z.rows(); ++i) rows.push_back(std::vector<double>(z.row(i).begin(), z.row(i).end()));
    interests.push_back(std::move(rows));
  }
  nlohmann::json topics = nlohmann::json::object();
  for (Index j = 0; j < s.cascades.size(); ++j) {
    topics[s.cascades[j].id] = {{"step", s.steps[j]}, {"topic", s.truth.topics[j]}};
  }
  return {{"interests", std::move(interests)},
          {"cascades", std::move(topics)},
          {"communities", s.truth.communities},
          {"dropped_cascades", s.dropped}};
}

// Writes edges.tsv, cascades.jsonl, ground_truth.json and gen_config.json.
inline void write_corpus(const SynthCorpus& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_edges(s.graph, dir / "edges.tsv");
  save_cascades(s.cascades, dir / "cascades.jsonl");
  std::ofstream gt(dir / "ground_truth.json");
  gt << ground_truth_json(s).dump() << '\n';
  std::ofstream cfg(dir / "gen_config.json");
  cfg << s.config.to_json().dump(2) << '\n';
  if (!gt || !cfg) throw std::runtime_error("failed writing corpus to " + dir.string());
}

// In-memory equivalent of writing and loading a generated corpus.
inline Corpus synth_to_corpus(const SynthCorpus& s, const CorpusConfig& cfg) {
  return prepare_corpus(s.graph, s.cascades, cfg);
}

}  // namespace dydiff
