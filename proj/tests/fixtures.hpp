#pragma once

// Small hand-built corpora shared by the unit and acceptance tests.

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dydiff/data.hpp"
#include "dydiff/embed.hpp"
#include "dydiff/graph.hpp"

namespace fixtures {

using dydiff::Cascade;
using dydiff::Corpus;
using dydiff::Index;
using dydiff::UserId;

inline Cascade make_cascade(std::string id, int step, std::vector<UserId> users, const std::string& text, Index dim) {
  Cascade c;
  c.id = std::move(id);
  c.text = text;
  c.time_step = step;
  double ts = step * 100.0;
  for (UserId u : users) c.users.push_back({u, ts += 1.0});
  c.content_vec = dydiff::embed_text(text, dim);
  return c;
}

// 5 users, three steps: one stimuli cascade at step 0, two training cascades
// at step 1 and one test cascade at step 2.
inline Corpus tiny_corpus(Index dim = 4) {
  Corpus c;
  c.graph = dydiff::SocialGraph(5, {{0, 1}, {1, 0}, {1, 2}, {3, 4}, {2, 4}});
  c.n_steps = 3;
  c.dim = dim;
  c.cascades = {
      make_cascade("s0", 0, {0, 1, 2}, "alpha beta gamma", dim),
      make_cascade("a", 1, {0, 1, 3, 4}, "alpha delta", dim),
      make_cascade("b", 1, {2, 4, 1}, "beta epsilon zeta", dim),
      make_cascade("t", 2, {1, 0, 2, 4}, "alpha beta", dim),
  };
  c.train = {0, 1, 2};
  c.test = {3};
  return c;
}

// Random corpus with at most `max_users` users and at most `max_cascades`
// cascades (one at step 0, the rest at step 1).
inline Corpus random_corpus(std::mt19937_64& rng, Index max_users = 10, Index max_cascades = 3, Index dim = 4) {
  std::uniform_int_distribution<Index> n_dist(3, max_users);
  const Index n = n_dist(rng);
  std::bernoulli_distribution edge(0.3);
  std::vector<dydiff::Edge> edges;
  for (Index s = 0; s < n; ++s) {
    for (Index d = 0; d < n; ++d) {
      if (s != d && edge(rng)) edges.push_back({static_cast<UserId>(s), static_cast<UserId>(d)});
    }
  }
  Corpus c;
  c.graph = dydiff::SocialGraph(n, std::move(edges));
  c.n_steps = 3;
  c.dim = dim;
  std::uniform_int_distribution<Index> n_casc(2, std::max<Index>(2, max_cascades));
  const Index total = n_casc(rng);
  std::uniform_int_distribution<Index> len_dist(2, n - 1);
  for (Index j = 0; j < total; ++j) {
    std::vector<UserId> users(n);
    std::iota(users.begin(), users.end(), UserId{0});
    std::shuffle(users.begin(), users.end(), rng);
    users.resize(len_dist(rng));
    const std::string text = "w" + std::to_string(rng() % 7) + " w" + std::to_string(rng() % 7) + " x" + std::to_string(j);
    c.cascades.push_back(make_cascade("r" + std::to_string(j), j == 0 ? 0 : 1, users, text, dim));
    c.train.push_back(j);
  }
  return c;
}

}  // namespace fixtures
