#pragma once

// Retrieval evaluation: Recall@K and MAP@K over ranked predictions, plus
// baseline rankers.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "dydiff/data.hpp"
#include "dydiff/model.hpp"
#include "dydiff/training.hpp"

namespace dydiff {

struct RankedPrediction {
  std::string cascade_id;
  std::vector<UserId> ranked;  // descending score, seed users excluded
  std::vector<UserId> hidden;  // ground truth
};

namespace detail {

inline void require_hidden(const RankedPrediction& p) {
  if (p.hidden.empty()) throw std::invalid_argument("cascade " + p.cascade_id + " has no hidden users");
}

}  // namespace detail

inline double recall_at_k(const RankedPrediction& p, Index k) {
  detail::require_hidden(p);
  const std::unordered_set<UserId> hidden(p.hidden.begin(), p.hidden.end());
  const Index top = std::min(k, p.ranked.size());
  Index hits = 0;
  for (Index r = 0; r < top; ++r) hits += hidden.contains(p.ranked[r]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(hidden.size());
}

// Sum of precision@r over relevant ranks r <= K, divided by min(|hidden|, K).
inline double average_precision_at_k(const RankedPrediction& p, Index k) {
  detail::require_hidden(p);
  if (k == 0) throw std::invalid_argument("average_precision_at_k: K must be >= 1");
  const std::unordered_set<UserId> hidden(p.hidden.begin(), p.hidden.end());
  const Index top = std::min(k, p.ranked.size());
  Index hits = 0;
  double sum = 0.0;
  for (Index r = 0; r < top; ++r) {
    if (hidden.contains(p.ranked[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min(hidden.size(), k));
}

inline double map_at_k(std::span<const RankedPrediction> preds, Index k) {
  if (preds.empty()) throw std::invalid_argument("map_at_k: no predictions");
  double s = 0.0;
  for (const auto& p : preds) s += average_precision_at_k(p, k);
  return s / static_cast<double>(preds.size());
}

inline double mean_recall_at_k(std::span<const RankedPrediction> preds, Index k) {
  if (preds.empty()) throw std::invalid_argument("mean_recall_at_k: no predictions");
  double s = 0.0;
  for (const auto& p : preds) s += recall_at_k(p, k);
  return s / static_cast<double>(preds.size());
}

struct CascadeScore {
  std::string cascade_id;
  std::map<Index, double> ap;
  std::map<Index, double> recall;
};

struct MetricReport {
  double seed_pct = 0.0;
  std::map<Index, double> map_at;
  std::map<Index, double> recall_at;
  std::vector<CascadeScore> per_cascade;
  Index n_cascades = 0;  // scored
  Index n_skipped = 0;   // empty hidden set

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::object(), r = nlohmann::json::object();
    for (const auto& [k, v] : map_at) m[std::to_string(k)] = v;
    for (const auto& [k, v] : recall_at) r[std::to_string(k)] = v;
    return {{"seed_pct", seed_pct}, {"map", m}, {"recall", r}, {"n_cascades", n_cascades}, {"n_skipped", n_skipped}};
  }
};

inline const std::vector<Index>& default_ks() {
  static const std::vector<Index> ks = {10, 50, 100};
  return ks;
}

// Ranks every non-observed user for one cascade.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::vector<UserId> rank(const Corpus& corpus, Index cascade, std::span<const UserId> observed) = 0;
};

inline std::vector<UserId> candidates(Index n_users, std::span<const UserId> observed) {
  const std::unordered_set<UserId> seen(observed.begin(), observed.end());
  std::vector<UserId> out;
  out.reserve(n_users);
  for (Index u = 0; u < n_users; ++u) {
    if (!seen.contains(static_cast<UserId>(u))) out.push_back(static_cast<UserId>(u));
  }
  return out;
}

// Seeded shuffle; the stream depends on the seed and the cascade index only.
class RandomRanker : public Ranker {
 public:
  explicit RandomRanker(std::uint64_t seed) : seed_(seed) {}
  std::vector<UserId> rank(const Corpus& corpus, Index cascade, std::span<const UserId> observed) override {
    auto out = candidates(corpus.n_users(), observed);
    std::mt19937_64 rng(mix_seed(seed_, cascade));
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  }

 private:
  std::uint64_t seed_;
};

// Descending forwarding count over training cascades, ascending id on ties.
class PopularityRanker : public Ranker {
 public:
  explicit PopularityRanker(const Corpus& corpus) : counts_(corpus.n_users(), 0) {
    for (Index i : corpus.train) {
      for (const Forward& f : corpus.cascades[i].users) ++counts_[f.user];
    }
  }
  std::vector<UserId> rank(const Corpus& corpus, Index, std::span<const UserId> observed) override {
    auto out = candidates(corpus.n_users(), observed);
    std::stable_sort(out.begin(), out.end(), [this](UserId a, UserId b) { return counts_[a] > counts_[b]; });
    return out;
  }

 private:
  std::vector<Index> counts_;
};

// Ground-truth forwarders first (in forwarding order), then ascending id.
class OracleRanker : public Ranker {
 public:
  std::vector<UserId> rank(const Corpus& corpus, Index cascade, std::span<const UserId> observed) override {
    const std::unordered_set<UserId> seen(observed.begin(), observed.end());
    std::vector<UserId> out;
    std::unordered_set<UserId> placed;
    for (UserId u : corpus.cascades[cascade].user_ids()) {
      if (!seen.contains(u)) {
        out.push_back(u);
        placed.insert(u);
      }
    }
    for (UserId u : candidates(corpus.n_users(), observed)) {
      if (!placed.contains(u)) out.push_back(u);
    }
    return out;
  }
};

// Scores with deterministic latents inferred at the corpus's final step.
class ModelRanker : public Ranker {
 public:
  ModelRanker(Model& model, const Corpus& corpus)
      : model_(&model), ctx_(corpus, model.config()), state_(infer_step(model, ctx_, corpus.test_step())) {}

  std::vector<UserId> rank(const Corpus& corpus, Index cascade, std::span<const UserId> observed) override {
    const auto scored = predict(*model_, state_, observed, corpus.cascades[cascade].content_vec);
    std::vector<UserId> out;
    out.reserve(scored.size());
    for (const auto& s : scored) out.push_back(s.user);
    return out;
  }

  const StepState& state() const { return state_; }

 private:
  Model* model_;
  ModelContext ctx_;
  StepState state_;
};

inline std::vector<RankedPrediction> rank_split(Ranker& ranker, const Corpus& corpus, double seed_pct,
                                                std::span<const Index> split, Index* n_skipped = nullptr) {
  std::vector<RankedPrediction> out;
  Index skipped = 0;
  for (Index i : split) {
    const Cascade& c = corpus.cascades[i];
    const auto ids = c.user_ids();
    SeedSplit s = seed_split(ids, seed_pct);
    if (s.hidden.empty()) {
      ++skipped;
      continue;
    }
    out.push_back({c.id, ranker.rank(corpus, i, s.observed), std::move(s.hidden)});
  }
  if (n_skipped != nullptr) *n_skipped = skipped;
  return out;
}

inline MetricReport evaluate(Ranker& ranker, const Corpus& corpus, double seed_pct,
                             std::span<const Index> ks, std::span<const Index> split) {
  MetricReport rep;
  rep.seed_pct = seed_pct;
  const auto preds = rank_split(ranker, corpus, seed_pct, split, &rep.n_skipped);
  rep.n_cascades = preds.size();
  for (const auto& p : preds) {
    CascadeScore cs{p.cascade_id, {}, {}};
    for (Index k : ks) {
      cs.ap[k] = average_precision_at_k(p, k);
      cs.recall[k] = recall_at_k(p, k);
      rep.map_at[k] += cs.ap[k];
      rep.recall_at[k] += cs.recall[k];
    }
    rep.per_cascade.push_back(std::move(cs));
  }
  for (Index k : ks) {
    if (preds.empty()) {
      rep.map_at[k] = 0.0;
      rep.recall_at[k] = 0.0;
    } else {
      rep.map_at[k] /= static_cast<double>(preds.size());
      rep.recall_at[k] /= static_cast<double>(preds.size());
    }
  }
  return rep;
}

inline MetricReport evaluate(Ranker& ranker, const Corpus& corpus, double seed_pct,
                             std::span<const Index> ks = default_ks()) {
  return evaluate(ranker, corpus, seed_pct, ks, corpus.test);
}

}  // namespace dydiff
