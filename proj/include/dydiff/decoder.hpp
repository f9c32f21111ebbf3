#pragma once

// Dual attention decoder. Users enter a cascade as senders (z W_S) and are
// scored as receivers (z W_R). A causal self-attention with sinusoidal
// position terms denoises the observed sender sequence, a content-anchored
// attention merges the projected content vector with that sequence, and each
// candidate's likelihood is sigmoid(<o, v_R>).

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dydiff/encoder.hpp"
#include "dydiff/graph.hpp"
#include "dydiff/numerics.hpp"

namespace dydiff {

struct DecoderParams {
  Parameter w_s, w_r;  // sender / receiver projections, d x d
  Parameter w_c, b_c;  // content projection

  static DecoderParams init(Index d, std::mt19937_64& rng) {
    DecoderParams p;
    p.w_s = Parameter("decoder.w_s", uniform_init(d, d, rng));
    p.w_r = Parameter("decoder.w_r", uniform_init(d, d, rng));
    p.w_c = Parameter("decoder.w_c", uniform_init(d, d, rng));
    p.b_c = Parameter("decoder.b_c", Tensor(1, d));
    return p;
  }

  std::vector<Parameter*> all(bool tied) {
    if (tied) return {&w_s, &w_c, &b_c};
    return {&w_s, &w_r, &w_c, &b_c};
  }
};

struct DecoderVars {
  Var w_s, w_r, w_c, b_c;

  // With `tied`, the receiver projection reuses the sender matrix.
  static DecoderVars bind(Tape& tape, DecoderParams& p, bool tied) {
    DecoderVars v;
    v.w_s = tape.leaf(p.w_s);
    v.w_r = tied ? v.w_s : tape.leaf(p.w_r);
    v.w_c = tape.leaf(p.w_c);
    v.b_c = tape.leaf(p.b_c);
    return v;
  }
};

struct Projections {
  Var senders;
  Var receivers;
};

inline Projections project(const Var& z, const DecoderVars& p) {
  return {matmul(z, p.w_s), matmul(z, p.w_r)};
}

inline Var project_content(const Var& content, const DecoderVars& p) {
  return add_row(matmul(content, p.w_c), p.b_c);
}

// PE(k)[2i] = sin(k / 10000^(2i/D)), PE(k)[2i+1] = cos(k / 10000^(2i/D)).
inline std::vector<double> positional_encoding(double k, Index dim) {
  if (dim % 2 != 0) throw std::invalid_argument("positional encoding needs an even dimension");
  std::vector<double> pe(dim);
  for (Index i = 0; i < dim / 2; ++i) {
    const double angle = k / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

// Rows PE(1) .. PE(len). Tables are cached per dimension and grown on demand.
inline Tensor positional_table(Index len, Index dim) {
  struct Cache {
    std::mutex mu;
    std::vector<std::vector<double>> rows;  // per dim: flattened rows
  };
  static Cache cache;
  std::lock_guard lock(cache.mu);
  if (cache.rows.size() <= dim) cache.rows.resize(dim + 1);
  auto& flat = cache.rows[dim];
  for (Index k = flat.size() / std::max<Index>(dim, 1) + 1; k <= len; ++k) {
    auto pe = positional_encoding(static_cast<double>(k), dim);
    flat.insert(flat.end(), pe.begin(), pe.end());
  }
  return Tensor(len, dim, std::vector<double>(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(len * dim)));
}

// Causal self-attention over a forwarding sequence (rows in forwarding
// order). Row k of the output is sum_{i<=k} w_ki * senders_i with
// w_k. = softmax_i <senders_i + PE(i), receivers_k + PE(k)>.
inline Var self_attention(const Var& senders, const Var& receivers, bool with_position = true) {
  if (senders.rows() == 0) throw std::invalid_argument("self_attention: empty sequence");
  if (!senders.value().same_shape(receivers.value())) {
    throw ShapeError("self_attention: sender " + senders.value().shape_string() + " vs receiver " +
                     receivers.value().shape_string());
  }
  Var s = senders, r = receivers;
  if (with_position) {
    const Var pe = senders.tape().constant(positional_table(senders.rows(), senders.cols()));
    s = add(senders, pe);
    r = add(receivers, pe);
  }
  const Var weights = causal_softmax(clamp(matmul_transposed(r, s), -kExpClamp, kExpClamp));
  return matmul(weights, senders);
}

struct HeteroAttention {
  Var o;        // 1 x d cascade representation
  Var weights;  // 1 x (K+1): content weight first, then one per sequence position
};

// Joint softmax over <v_c, v_c> and <v_k, v_c>; o = a_c v_c + sum_k a_k v_k.
inline HeteroAttention hetero_attention(const Var& content, const std::optional<Var>& sequence) {
  const Var stacked = sequence && sequence->rows() > 0 ? concat_rows(content, *sequence) : content;
  const Var logits = transpose(matmul_transposed(stacked, content));
  const Var weights = row_softmax(clamp(logits, -kExpClamp, kExpClamp));
  return {matmul(weights, stacked), weights};
}

// sigmoid(<o, v_R>) for every receiver row; returns an n x 1 column.
inline Var likelihood(const Var& o, const Var& receivers) {
  return sigmoid(matmul_transposed(receivers, o));
}

struct DecoderOptions {
  bool self_attention = true;
  bool hetero_attention = true;
};

// Representation of a cascade from its projected content and observed prefix.
inline Var cascade_representation(const Projections& proj, std::span<const UserId> prefix,
                                  const Var& content, const DecoderOptions& opts) {
  std::optional<Var> seq;
  if (!prefix.empty()) {
    std::vector<Index> rows(prefix.begin(), prefix.end());
    const Var vs = gather_rows(proj.senders, rows);
    seq = opts.self_attention ? self_attention(vs, gather_rows(proj.receivers, std::move(rows))) : vs;
  }
  if (opts.hetero_attention) return hetero_attention(content, seq).o;
  if (!seq) return content.tape().constant(Tensor(1, content.cols()));
  return mean_rows(*seq);
}

struct ScoredUser {
  UserId user = 0;
  double score = 0.0;  // likelihood
  double logit = 0.0;  // <o, v_R>
};

// Scores every user not in `observed` and sorts by descending likelihood,
// ties broken by ascending id. Ordering uses the unclamped logit, which
// induces the same order wherever the likelihood is not saturated.
inline std::vector<ScoredUser> rank_candidates(const Tensor& o, const Tensor& receivers,
                                               std::span<const UserId> observed) {
  if (o.size() != receivers.cols()) {
    throw ShapeError("rank_candidates: representation " + o.shape_string() + " vs receivers " +
                     receivers.shape_string());
  }
  std::unordered_set<UserId> excluded(observed.begin(), observed.end());
  std::vector<ScoredUser> out;
  out.reserve(receivers.rows());
  const auto ov = o.values();
  for (Index u = 0; u < receivers.rows(); ++u) {
    if (excluded.contains(static_cast<UserId>(u))) continue;
    const auto row = receivers.row(u);
    double logit = 0.0;
    for (Index c = 0; c < row.size(); ++c) logit += row[c] * ov[c];
    out.push_back({static_cast<UserId>(u), detail::stable_sigmoid(logit), logit});
  }
  if (out.empty()) throw std::invalid_argument("rank_candidates: no candidate users left");
  std::sort(out.begin(), out.end(), [](const ScoredUser& a, const ScoredUser& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    return a.user < b.user;
  });
  return out;
}

}  // namespace dydiff
