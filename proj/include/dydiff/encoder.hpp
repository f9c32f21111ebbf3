#pragma once

// Dynamic encoder: a gated recurrent unit whose hidden-state terms are
// aggregated over the social graph, followed by a Gaussian latent layer
// sampled with the reparametrization z = mu + eps * sigma.

#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dydiff/graph.hpp"
#include "dydiff/numerics.hpp"

namespace dydiff {

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor uniform_init(Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

struct EncoderParams {
  Parameter w_hu, w_hr, w_hm;  // hidden-state weights, d x d
  Parameter w_xu, w_xr, w_xm;  // stimuli weights, d x d
  Parameter w_mu, b_mu;        // mean head
  Parameter w_logvar, b_logvar;

  static EncoderParams init(Index d, std::mt19937_64& rng) {
    EncoderParams p;
    p.w_hu = Parameter("encoder.w_hu", uniform_init(d, d, rng));
    p.w_hr = Parameter("encoder.w_hr", uniform_init(d, d, rng));
    p.w_hm = Parameter("encoder.w_hm", uniform_init(d, d, rng));
    p.w_xu = Parameter("encoder.w_xu", uniform_init(d, d, rng));
    p.w_xr = Parameter("encoder.w_xr", uniform_init(d, d, rng));
    p.w_xm = Parameter("encoder.w_xm", uniform_init(d, d, rng));
    p.w_mu = Parameter("encoder.w_mu", uniform_init(d, d, rng));
    p.b_mu = Parameter("encoder.b_mu", Tensor(1, d));
    p.w_logvar = Parameter("encoder.w_logvar", uniform_init(d, d, rng));
    p.b_logvar = Parameter("encoder.b_logvar", Tensor(1, d));
    return p;
  }

  std::vector<Parameter*> all() {
    return {&w_hu, &w_hr, &w_hm, &w_xu, &w_xr, &w_xm, &w_mu, &b_mu, &w_logvar, &b_logvar};
  }
};

struct EncoderVars {
  Var w_hu, w_hr, w_hm, w_xu, w_xr, w_xm, w_mu, b_mu, w_logvar, b_logvar;

  static EncoderVars bind(Tape& tape, EncoderParams& p) {
    return {tape.leaf(p.w_hu), tape.leaf(p.w_hr), tape.leaf(p.w_hm), tape.leaf(p.w_xu),
            tape.leaf(p.w_xr), tape.leaf(p.w_xm), tape.leaf(p.w_mu), tape.leaf(p.b_mu),
            tape.leaf(p.w_logvar), tape.leaf(p.b_logvar)};
  }
};

// One recurrent update:
//   G_u = sigmoid(L^k h W_hu + x W_xu)
//   G_r = sigmoid(L^k h W_hr + x W_xr)
//   h~  = tanh(L^k (G_r * h) W_hm + x W_xm)
//   h'  = G_u * h~ + (1 - G_u) * h
inline Var gru_step(const Var& h_prev, const Var& x_prev, const NormalizedOperator& op,
                    const EncoderVars& p, int conv_layers = 1) {
  if (h_prev.rows() != x_prev.rows()) {
    throw ShapeError("gru_step: hidden state " + h_prev.value().shape_string() + " vs stimuli " +
                     x_prev.value().shape_string());
  }
  const Var agg = propagate(op, h_prev, conv_layers);
  const Var g_u = sigmoid(add(matmul(agg, p.w_hu), matmul(x_prev, p.w_xu)));
  const Var g_r = sigmoid(add(matmul(agg, p.w_hr), matmul(x_prev, p.w_xr)));
  const Var reset = propagate(op, hadamard(g_r, h_prev), conv_layers);
  const Var cand = tanh(add(matmul(reset, p.w_hm), matmul(x_prev, p.w_xm)));
  return add(hadamard(g_u, cand), hadamard(one_minus(g_u), h_prev));
}

// Single graph convolution over accumulated stimuli; used when interests are
// treated as static.
inline Var static_step(const Var& x, const NormalizedOperator& op, const EncoderVars& p,
                       int conv_layers = 1) {
  return tanh(propagate(op, matmul(x, p.w_xm), conv_layers));
}

struct Latent {
  Var mu;
  Var sigma;
  Var z;
};

// mu = h W_mu + b_mu, sigma = exp(0.5 (h W_logvar + b_logvar)), z = mu + eps * sigma.
inline Latent sample(const Var& h, const EncoderVars& p, const Var& eps) {
  Latent out;
  out.mu = add_row(matmul(h, p.w_mu), p.b_mu);
  out.sigma = exp(scale(add_row(matmul(h, p.w_logvar), p.b_logvar), 0.5));
  out.z = add(out.mu, hadamard(eps, out.sigma));
  return out;
}

// KL(N(mu, sigma^2) || N(0, 1)) summed over all users and dimensions.
inline Var kl_to_prior(const Var& mu, const Var& sigma) {
  const Var sq = add(hadamard(mu, mu), hadamard(sigma, sigma));
  const Var terms = add_scalar(sub(sq, scale(log(sigma), 2.0)), -1.0);
  return scale(sum(terms), 0.5);
}

struct EncoderOptions {
  int conv_layers = 1;
  bool static_interests = false;
};

struct Rollout {
  std::vector<Latent> latents;  // index t = 0..last_step; t = 0 comes from the initial state
  std::vector<Var> hidden;      // same indexing
  Var kl;                       // sum of KL over steps 1..last_step
};

// stimuli[t] drives step t (t >= 1); eps[t] is the noise for step t.
inline Rollout rollout(Tape& tape, const EncoderVars& p, const NormalizedOperator& op,
                       std::span<const Tensor> stimuli, std::span<const Tensor> eps, int last_step,
                       const EncoderOptions& opts) {
  if (last_step < 0 || static_cast<Index>(last_step) >= eps.size() ||
      static_cast<Index>(last_step) >= std::max<Index>(stimuli.size(), 1)) {
    throw std::invalid_argument("rollout: inputs do not cover step " + std::to_string(last_step));
  }
  const Index n = op.n();
  const Index d = eps[0].cols();
  Rollout out;
  Var h = tape.constant(Tensor(n, d));
  out.hidden.push_back(h);
  out.latents.push_back(sample(h, p, tape.constant(eps[0])));
  out.kl = tape.constant(Tensor(1, 1));
  for (int t = 1; t <= last_step; ++t) {
    const Var x = tape.constant(stimuli[t]);
    h = opts.static_interests ? static_step(x, op, p, opts.conv_layers)
                              : gru_step(h, x, op, p, opts.conv_layers);
    Latent lat = sample(h, p, tape.constant(eps[t]));
    out.kl = add(out.kl, kl_to_prior(lat.mu, lat.sigma));
    out.hidden.push_back(h);
    out.latents.push_back(lat);
  }
  return out;
}

}  // namespace dydiff
