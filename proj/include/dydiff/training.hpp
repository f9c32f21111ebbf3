#pragma once

// Variational ranking objective and the training loop.
//
//   L = sum_j L_j^DIFF + beta * sum_t KL_t + lambda1 ||phi||^2 + lambda2 ||theta||^2
//
// where L_j^DIFF is the weighted approximate-rank pairwise (WARP) loss of
// cascade j: for each hidden forwarder u+ with rank r among the sampled
// negatives,  L(r) / r * sum_{u-} max(0, margin - p(u+) + p(u-)),  with
// L(r) = 1 + 1/2 + ... + 1/r. Ranks act as constants under differentiation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dydiff/data.hpp"
#include "dydiff/decoder.hpp"
#include "dydiff/encoder.hpp"
#include "dydiff/model.hpp"
#include "dydiff/numerics.hpp"

namespace dydiff {

inline double harmonic(Index r) {
  double s = 0.0;
  for (Index k = 1; k <= r; ++k) s += 1.0 / static_cast<double>(k);
  return s;
}

// 1 + number of negatives scoring strictly higher than `positive`.
inline Index warp_rank(double positive, std::span<const double> negatives) {
  return 1 + static_cast<Index>(std::count_if(negatives.begin(), negatives.end(),
                                              [positive](double s) { return s > positive; }));
}

struct PairLossRecord {
  UserId positive = 0;
  UserId negative = 0;
  double pair_loss = 0.0;
  Index rank_of_positive = 1;
};

inline std::vector<PairLossRecord> warp_pairs(std::span<const UserId> pos_ids, std::span<const double> pos,
                                              std::span<const UserId> neg_ids, std::span<const double> neg,
                                              double margin) {
  std::vector<PairLossRecord> out;
  for (Index p = 0; p < pos.size(); ++p) {
    const Index rank = warp_rank(pos[p], neg);
    for (Index n = 0; n < neg.size(); ++n) {
      out.push_back({pos_ids[p], neg_ids[n], std::max(0.0, margin - pos[p] + neg[n]), rank});
    }
  }
  return out;
}

inline double warp_loss(std::span<const double> pos, std::span<const double> neg, double margin) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("warp_loss: needs positive and negative scores");
  double loss = 0.0;
  for (double sp : pos) {
    const Index rank = warp_rank(sp, neg);
    double pairs = 0.0;
    for (double sn : neg) pairs += std::max(0.0, margin - sp + sn);
    loss += harmonic(rank) * pairs / static_cast<double>(rank);
  }
  return loss;
}

// Traced WARP over a score column whose first n_pos rows are positives.
inline Var warp_loss(const Var& scores, Index n_pos, double margin) {
  const Tensor& s = scores.value();
  if (s.cols() != 1) throw ShapeError("warp_loss: scores must be a column, got " + s.shape_string());
  if (n_pos == 0 || n_pos >= s.rows()) {
    throw std::invalid_argument("warp_loss: needs positive and negative scores");
  }
  const auto all = s.values();
  const auto pos = all.first(n_pos);
  const auto neg = all.subspan(n_pos);
  std::vector<double> weights(n_pos);
  for (Index p = 0; p < n_pos; ++p) {
    const Index rank = warp_rank(pos[p], neg);
    weights[p] = harmonic(rank) / static_cast<double>(rank);
  }
  double loss = 0.0;
  for (Index p = 0; p < n_pos; ++p) {
    double pairs = 0.0;
    for (double sn : neg) pairs += std::max(0.0, margin - pos[p] + sn);
    loss += weights[p] * pairs;
  }
  const std::size_t in = scores.id();
  return scores.tape().record(
      Tensor(1, 1, loss), {scores}, [in, n_pos, margin, weights = std::move(weights)](Tape& t, std::size_t self) {
        Tensor* g = t.accumulator(in);
        if (g == nullptr) return;
        const double up = t.grad(self)[0];
        const auto v = t.value(in).values();
        auto dst = g->values();
        for (Index p = 0; p < n_pos; ++p) {
          for (Index n = n_pos; n < v.size(); ++n) {
            if (margin - v[p] + v[n] > 0.0) {
              dst[p] -= up * weights[p];
              dst[n] += up * weights[p];
            }
          }
        }
      });
}

// Uniform sample without replacement from users outside the cascade.
inline std::vector<UserId> sample_negatives(std::span<const UserId> cascade_users, Index n_users, Index pool_size,
                                            std::mt19937_64& rng) {
  if (pool_size < 1) throw std::invalid_argument("sample_negatives: pool_size must be >= 1");
  std::unordered_set<UserId> members(cascade_users.begin(), cascade_users.end());
  std::vector<UserId> eligible;
  eligible.reserve(n_users);
  for (Index u = 0; u < n_users; ++u) {
    if (!members.contains(static_cast<UserId>(u))) eligible.push_back(static_cast<UserId>(u));
  }
  if (eligible.empty()) throw std::invalid_argument("sample_negatives: no eligible negative users");
  if (pool_size >= eligible.size()) return eligible;
  std::vector<UserId> out;
  out.reserve(pool_size);
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(out), pool_size, rng);
  return out;
}

inline std::vector<UserId> sample_negatives(std::span<const UserId> cascade_users, Index n_users, Index pool_size,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_negatives(cascade_users, n_users, pool_size, rng);
}

enum class Optimizer { kSgd, kAdam };

struct ObjectiveConfig {
  double beta = 10.0;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double margin = 0.3;
  double lr = 0.05;
  int epochs = 200;
  Index neg_pool_size = 256;
  std::uint64_t seed = 1;
  double train_seed_pct = 0.5;
  Optimizer optimizer = Optimizer::kSgd;
  int patience = 5;               // 0 disables early stopping
  double min_improvement = 1e-5;  // relative
};

// A training cascade with its observed prefix and hidden forwarders.
struct TrainingCascade {
  Index index = 0;
  int step = 0;
  std::vector<UserId> prefix;
  std::vector<UserId> positives;
};

// Cascades from training steps >= 1 with at least one hidden forwarder.
inline std::vector<TrainingCascade> training_cascades(const Corpus& corpus, double seed_pct) {
  std::vector<TrainingCascade> out;
  for (Index i : corpus.train) {
    const Cascade& c = corpus.cascades[i];
    if (c.time_step < 1) continue;
    const auto ids = c.user_ids();
    SeedSplit split = seed_split(ids, seed_pct);
    if (split.hidden.empty()) continue;
    out.push_back({i, c.time_step, std::move(split.observed), std::move(split.hidden)});
  }
  return out;
}

// Randomness consumed by one objective evaluation.
struct EpochDraws {
  std::vector<Tensor> eps;                    // per step 0..last_step, n_users x d
  std::vector<std::vector<UserId>> negatives;  // per training cascade
};

inline int last_training_step(std::span<const TrainingCascade> cascades) {
  int last = 0;
  for (const auto& tc : cascades) last = std::max(last, tc.step);
  return last;
}

inline EpochDraws draw_epoch(const Corpus& corpus, const ModelConfig& model, std::span<const TrainingCascade> cascades,
                             Index pool_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EpochDraws d;
  const int last = last_training_step(cascades);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t <= last; ++t) {
    Tensor e(corpus.n_users(), model.dim);
    if (!model.ablations.deterministic) {
      for (double& v : e.values()) v = normal(rng);
    }
    d.eps.push_back(std::move(e));
  }
  for (const auto& tc : cascades) {
    d.negatives.push_back(sample_negatives(corpus.cascades[tc.index].user_ids(), corpus.n_users(), pool_size, rng));
  }
  return d;
}

struct ObjectiveValue {
  Var total;
  double ranking = 0.0;
  double kl = 0.0;
  double reg_encoder = 0.0;
  double reg_decoder = 0.0;
};

inline ObjectiveValue objective(Tape& tape, Model& model, const ModelContext& ctx,
                                std::span<const TrainingCascade> cascades, const ObjectiveConfig& cfg,
                                const EpochDraws& draws) {
  const Corpus& corpus = *ctx.corpus;
  const BoundModel vars = bind(tape, model);
  const int last = last_training_step(cascades);
  const Rollout r = rollout(tape, vars.encoder, ctx.op, ctx.stimuli, draws.eps, last, model.encoder_options());

  std::vector<std::optional<Projections>> proj(static_cast<Index>(last) + 1);
  Var ranking = tape.constant(Tensor(1, 1));
  const DecoderOptions dopts = model.decoder_options();
  for (Index j = 0; j < cascades.size(); ++j) {
    const TrainingCascade& tc = cascades[j];
    auto& pr = proj[static_cast<Index>(tc.step)];
    if (!pr) pr = project(r.latents[static_cast<Index>(tc.step)].z, vars.decoder);
    const Cascade& c = corpus.cascades[tc.index];
    const Var vc = project_content(tape.constant(Tensor::row_vector(c.content_vec)), vars.decoder);
    const Var o = cascade_representation(*pr, tc.prefix, vc, dopts);
    std::vector<Index> cand(tc.positives.begin(), tc.positives.end());
    cand.insert(cand.end(), draws.negatives[j].begin(), draws.negatives[j].end());
    const Var p = likelihood(o, gather_rows(pr->receivers, std::move(cand)));
    ranking = add(ranking, warp_loss(p, tc.positives.size(), cfg.margin));
  }

  Var reg_enc = tape.constant(Tensor(1, 1));
  for (const Var& w : {vars.encoder.w_hu, vars.encoder.w_hr, vars.encoder.w_hm, vars.encoder.w_xu, vars.encoder.w_xr,
                       vars.encoder.w_xm, vars.encoder.w_mu, vars.encoder.b_mu, vars.encoder.w_logvar,
                       vars.encoder.b_logvar}) {
    reg_enc = add(reg_enc, sum_squares(w));
  }
  Var reg_dec = tape.constant(Tensor(1, 1));
  std::vector<Var> dec = {vars.decoder.w_s, vars.decoder.w_c, vars.decoder.b_c};
  if (!model.config().ablations.tied_projection) dec.push_back(vars.decoder.w_r);
  for (const Var& w : dec) reg_dec = add(reg_dec, sum_squares(w));

  const double beta = model.config().ablations.deterministic ? 0.0 : cfg.beta;
  Var total = add(ranking, scale(r.kl, beta));
  total = add(total, scale(reg_enc, cfg.lambda1));
  total = add(total, scale(reg_dec, cfg.lambda2));
  return {total, ranking.item(), r.kl.item(), reg_enc.item(), reg_dec.item()};
}

// Objective with randomness derived from (cfg.seed, epoch).
inline ObjectiveValue total_objective(Tape& tape, Model& model, const ModelContext& ctx, const ObjectiveConfig& cfg,
                                      std::uint64_t epoch) {
  const auto cascades = training_cascades(*ctx.corpus, cfg.train_seed_pct);
  const auto draws = draw_epoch(*ctx.corpus, model.config(), cascades, cfg.neg_pool_size, mix_seed(cfg.seed, epoch));
  return objective(tape, model, ctx, cascades, cfg, draws);
}

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class AdamState {
 public:
  void step(std::span<Parameter* const> params, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (m_.empty()) {
      for (Parameter* p : params) {
        m_.emplace_back(p->value().rows(), p->value().cols());
        v_.emplace_back(p->value().rows(), p->value().cols());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (Index k = 0; k < params.size(); ++k) {
      auto w = params[k]->mutable_value().values();
      auto g = params[k]->grad().values();
      auto m = m_[k].values();
      auto v = v_[k].values();
      for (Index i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * g[i];
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }

 private:
  std::vector<Tensor> m_, v_;
  int t_ = 0;
};

struct TrainResult {
  std::vector<double> losses;  // objective value at each epoch, before its update
  bool converged = false;
};

using EpochCallback = std::function<void(int epoch, const ObjectiveValue&)>;

// One full-batch gradient step per epoch. Stops after cfg.epochs, or once
// `patience` consecutive epochs fail to improve on the best loss by a
// relative `min_improvement`.
inline TrainResult train(Model& model, const Corpus& corpus, const ObjectiveConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  const ModelContext ctx(corpus, model.config());
  const auto cascades = training_cascades(corpus, cfg.train_seed_pct);
  if (cascades.empty()) throw std::invalid_argument("train: no training cascades after step 0");
  const auto params = model.parameters();
  AdamState adam;
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto draws = draw_epoch(corpus, model.config(), cascades, cfg.neg_pool_size,
                                  mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    model.zero_grad();
    Tape tape;
    std::optional<ObjectiveValue> evaluated;
    try {
      evaluated = objective(tape, model, ctx, cascades, cfg, draws);
    } catch (const std::domain_error& e) {
      // Diverged parameters overflow before the loss itself can be formed.
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " (" + e.what() + ")", epoch);
    }
    const ObjectiveValue& obj = *evaluated;
    const double loss = obj.total.item();
    if (!std::isfinite(loss)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch), epoch);
    tape.backward(obj.total);
    result.losses.push_back(loss);
    if (on_epoch) on_epoch(epoch, obj);

    if (cfg.optimizer == Optimizer::kAdam) {
      adam.step(params, cfg.lr);
    } else {
      for (Parameter* p : params) {
        auto w = p->mutable_value().values();
        auto g = p->grad().values();
        for (Index i = 0; i < w.size(); ++i) w[i] -= cfg.lr * g[i];
      }
    }

    if (cfg.patience > 0) {
      if (std::isfinite(best) && (best - loss) < cfg.min_improvement * std::abs(best)) {
        if (++stale >= cfg.patience) {
          result.converged = true;
          break;
        }
      } else {
        stale = 0;
      }
      best = std::min(best, loss);
    }
  }
  return result;
}

}  // namespace dydiff
