#pragma once

// Directed follower graph and its normalized propagation operator
// D^-1/2 (A + I) D^-1/2, where row i of A marks the users that influence i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dydiff/numerics.hpp"

namespace dydiff {

using UserId = std::uint32_t;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An edge (src, dst) means "src influences dst", i.e. dst follows src.
struct Edge {
  UserId src = 0;
  UserId dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class SocialGraph {
 public:
  SocialGraph() = default;

  // Duplicate edges are collapsed and self-edges dropped.
  SocialGraph(Index n_users, std::vector<Edge> edges) : n_users_(n_users) {
    for (const Edge& e : edges) {
      if (e.src >= n_users || e.dst >= n_users) {
        throw std::invalid_argument("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                    " out of range for " + std::to_string(n_users) + " users");
      }
    }
    std::erase_if(edges, [](const Edge& e) { return e.src == e.dst; });
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    influencers_.assign(n_users, {});
    for (const Edge& e : edges_) influencers_[e.dst].push_back(e.src);
  }

  Index n_users() const { return n_users_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<UserId>& influencers(UserId u) const { return influencers_[u]; }

 private:
  Index n_users_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<UserId>> influencers_;
};

// Reads "src<TAB>dst" lines with an optional leading "#users=N" header.
inline SocialGraph load_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge file " + path.string());

  std::vector<Edge> edges;
  std::optional<Index> declared;
  Index max_id_plus_one = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("#users=", 0) == 0) {
      try {
        std::size_t used = 0;
        const unsigned long n = std::stoul(line.substr(7), &used);
        if (used != line.size() - 7) throw std::invalid_argument("trailing");
        declared = n;
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":1: malformed header '" + line + "'");
      }
      continue;
    }
    const auto tab = line.find('\t');
    bool ok = tab != std::string::npos && tab > 0 && tab + 1 < line.size();
    unsigned long src = 0, dst = 0;
    if (ok) {
      try {
        std::size_t u1 = 0, u2 = 0;
        const std::string a = line.substr(0, tab), b = line.substr(tab + 1);
        src = std::stoul(a, &u1);
        dst = std::stoul(b, &u2);
        ok = u1 == a.size() && u2 == b.size() && a.front() != '-' && b.front() != '-' &&
             src <= UINT32_MAX && dst <= UINT32_MAX;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 'src<TAB>dst', got '" +
                       line + "'");
    }
    if (declared && (src >= *declared || dst >= *declared)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": user id exceeds declared #users=" +
                       std::to_string(*declared));
    }
    max_id_plus_one = std::max<Index>(max_id_plus_one, std::max(src, dst) + 1);
    edges.push_back({static_cast<UserId>(src), static_cast<UserId>(dst)});
  }
  return SocialGraph(declared.value_or(max_id_plus_one), std::move(edges));
}

inline void save_edges(const SocialGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write edge file " + path.string());
  out << "#users=" << g.n_users() << '\n';
  for (const Edge& e : g.edges()) out << e.src << '\t' << e.dst << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Row-compressed sparse n x n matrix; immutable after construction.
class NormalizedOperator {
 public:
  NormalizedOperator() = default;
  NormalizedOperator(Index n, std::vector<Index> row_ptr, std::vector<Index> col_idx,
                     std::vector<double> values)
      : n_(n), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)), values_(std::move(values)) {
    build_transpose();
  }

  static NormalizedOperator identity(Index n) {
    std::vector<Index> rp(n + 1), ci(n);
    std::iota(rp.begin(), rp.end(), Index{0});
    std::iota(ci.begin(), ci.end(), Index{0});
    return NormalizedOperator(n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
  }

  Index n() const { return n_; }
  Index nnz() const { return values_.size(); }
  const std::vector<Index>& row_ptr() const { return row_ptr_; }
  const std::vector<Index>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  Tensor apply(const Tensor& m) const { return multiply(row_ptr_, col_idx_, values_, m); }
  Tensor apply_transpose(const Tensor& m) const { return multiply(t_row_ptr_, t_col_idx_, t_values_, m); }

  Tensor dense() const {
    Tensor d(n_, n_);
    for (Index r = 0; r < n_; ++r) {
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
    }
    return d;
  }

 private:
  Tensor multiply(const std::vector<Index>& rp, const std::vector<Index>& ci,
                  const std::vector<double>& vals, const Tensor& m) const {
    if (m.rows() != n_) {
      throw ShapeError("operator over " + std::to_string(n_) + " users applied to " + m.shape_string());
    }
    Tensor out(n_, m.cols());
    for (Index r = 0; r < n_; ++r) {
      auto dst = out.row(r);
      for (Index k = rp[r]; k < rp[r + 1]; ++k) {
        const double w = vals[k];
        auto src = m.row(ci[k]);
        for (Index c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
      }
    }
    return out;
  }

  void build_transpose() {
    t_row_ptr_.assign(n_ + 1, 0);
    for (Index c : col_idx_) ++t_row_ptr_[c + 1];
    for (Index i = 0; i < n_; ++i) t_row_ptr_[i + 1] += t_row_ptr_[i];
    t_col_idx_.resize(col_idx_.size());
    t_values_.resize(values_.size());
    std::vector<Index> next(t_row_ptr_.begin(), t_row_ptr_.end() - 1);
    for (Index r = 0; r < n_; ++r) {
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const Index pos = next[col_idx_[k]]++;
        t_col_idx_[pos] = r;
        t_values_[pos] = values_[k];
      }
    }
  }

  Index n_ = 0;
  std::vector<Index> row_ptr_, col_idx_;
  std::vector<double> values_;
  std::vector<Index> t_row_ptr_, t_col_idx_;
  std::vector<double> t_values_;
};

// Row i aggregates over i itself and i's influencers; degrees are row sums of A + I.
inline NormalizedOperator build_operator(const SocialGraph& g) {
  const Index n = g.n_users();
  std::vector<double> deg(n);
  for (Index i = 0; i < n; ++i) {
    deg[i] = 1.0 + static_cast<double>(g.influencers(static_cast<UserId>(i)).size());
  }
  std::vector<Index> row_ptr(n + 1, 0), col_idx;
  std::vector<double> values;
  col_idx.reserve(n + g.edges().size());
  values.reserve(n + g.edges().size());
  for (Index i = 0; i < n; ++i) {
    std::vector<UserId> cols = g.influencers(static_cast<UserId>(i));
    cols.push_back(static_cast<UserId>(i));
    std::sort(cols.begin(), cols.end());
    for (UserId j : cols) {
      col_idx.push_back(j);
      values.push_back(1.0 / std::sqrt(deg[i] * deg[j]));
    }
    row_ptr[i + 1] = col_idx.size();
  }
  return NormalizedOperator(n, std::move(row_ptr), std::move(col_idx), std::move(values));
}

// Traced sparse-dense product, applied `times` times. The operator is a constant
// and must outlive the tape.
inline Var propagate(const NormalizedOperator& op, const Var& m, int times = 1) {
  if (times < 1) throw std::invalid_argument("propagate: times must be >= 1");
  Var out = m;
  for (int k = 0; k < times; ++k) {
    const std::size_t in = out.id();
    out = out.tape().record(op.apply(out.value()), {out}, [&op, in](Tape& t, std::size_t self) {
      if (Tensor* g = t.accumulator(in)) *g += op.apply_transpose(t.grad(self));
    });
  }
  return out;
}

}  // namespace dydiff
