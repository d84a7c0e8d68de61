// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with tape-based reverse-mode gradients. Only the op set the
// transformer needs; templated on scalar so training runs in float and
// gradient checking in double. Single-threaded and reduction-order
// deterministic by construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fillerlab/errors.hpp"

namespace fillerlab {

template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> sh) : shape(std::move(sh)) {
    v.assign(count(shape), S(0));
  }

  static long count(const std::vector<int>& sh) {
    long c = 1;
    for (int d : sh) {
      if (d < 0) throw ConfigError("negative tensor dimension");
      c *= d;
    }
    return c;
  }

  long size() const { return static_cast<long>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[i]; }
  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  void zero() { std::fill(v.begin(), v.end(), S(0)); }
};

inline std::string shape_str(const std::vector<int>& sh) {
  std::string s = "(";
  for (size_t i = 0; i < sh.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(sh[i]);
  }
  return s + ")";
}

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                      const char* op) {
  if (a.shape != b.shape)
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <class S>
struct Node;
template <class S>
using NodeP = std::shared_ptr<Node<S>>;

template <class S>
struct Node {
  Tensor<S> val;
  Tensor<S> grad;  // allocated by Tape::backward when needed
  bool needs_grad = false;
  std::vector<NodeP<S>> parents;
  std::function<void(Node<S>&)> back;  // accumulates into parents' grads
  Tensor<S>* grad_sink = nullptr;      // leaf: external gradient buffer

  void ensure_grad() {
    if (grad.shape != val.shape) grad = Tensor<S>(val.shape);
  }
};

// Records every op of one forward pass; cleared per step.
template <class S>
class Tape {
 public:
  NodeP<S> make(Tensor<S> val, std::vector<NodeP<S>> parents,
                std::function<void(Node<S>&)> back) {
    auto node = std::make_shared<Node<S>>();
    node->val = std::move(val);
    node->parents = std::move(parents);
    node->back = std::move(back);
    for (const auto& p : node->parents)
      if (p->needs_grad) node->needs_grad = true;
    nodes_.push_back(node);
    return node;
  }

  NodeP<S> constant(Tensor<S> val) { return make(std::move(val), {}, nullptr); }

  // Leaf with an external gradient sink; sink == nullptr means frozen.
  NodeP<S> leaf(Tensor<S> val, Tensor<S>* sink) {
    auto node = constant(std::move(val));
    node->grad_sink = sink;
    node->needs_grad = sink != nullptr;
    return node;
  }

  void backward(const NodeP<S>& loss) {
    if (loss->val.size() != 1)
      throw ConfigError("backward requires a scalar loss");
    for (auto& n : nodes_)
      if (n->needs_grad) {
        n->ensure_grad();
        n->grad.zero();
      }
    loss->ensure_grad();
    loss->grad.v[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<S>& n = **it;
      if (!n.needs_grad) continue;
      if (n.back) n.back(n);
      if (n.grad_sink) {
        if (n.grad_sink->shape != n.val.shape)
          throw ConfigError("gradient sink shape mismatch");
        for (long i = 0; i < n.val.size(); ++i)
          n.grad_sink->v[i] += n.grad.v[i];
      }
    }
  }

  void clear() { nodes_.clear(); }
  size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<NodeP<S>> nodes_;
};

// ---------------------------------------------------------------------------
// gemm kernels (row-major). Inner loops are written so the compiler can
// vectorize; reduction order is fixed.

// C[M,N] += A[M,K] * B[K,N]
template <class S>
void gemm_nn(int M, int N, int K, const S* A, const S* B, S* C) {
  for (int m = 0; m < M; ++m) {
    S* c = C + static_cast<long>(m) * N;
    const S* a = A + static_cast<long>(m) * K;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      const S* b = B + static_cast<long>(k) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <class S>
void gemm_nt(int M, int N, int K, const S* A, const S* B, S* C) {
  for (int m = 0; m < M; ++m) {
    const S* a = A + static_cast<long>(m) * K;
    S* c = C + static_cast<long>(m) * N;
    for (int n = 0; n < N; ++n) {
      const S* b = B + static_cast<long>(n) * K;
      S acc = S(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[n] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <class S>
void gemm_tn(int M, int N, int K, const S* A, const S* B, S* C) {
  for (int k = 0; k < K; ++k) {
    const S* a = A + static_cast<long>(k) * M;
    const S* b = B + static_cast<long>(k) * N;
    for (int m = 0; m < M; ++m) {
      const S av = a[m];
      S* c = C + static_cast<long>(m) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// ---------------------------------------------------------------------------
// ops

// x [..., K] times w [K, N] -> [..., N]
template <class S>
NodeP<S> mm(Tape<S>& tape, NodeP<S> x, NodeP<S> w) {
  if (w->val.ndim() != 2)
    throw ConfigError("mm: weight must be 2-d, got " + shape_str(w->val.shape));
  const int K = w->val.dim(0);
  const int N = w->val.dim(1);
  if (x->val.ndim() < 1 || x->val.shape.back() != K)
    throw ConfigError("mm: inner dims differ " + shape_str(x->val.shape) +
                      " vs " + shape_str(w->val.shape));
  const int R = static_cast<int>(x->val.size() / K);
  std::vector<int> out_shape = x->val.shape;
  out_shape.back() = N;
  Tensor<S> out(out_shape);
  gemm_nn(R, N, K, x->val.data(), w->val.data(), out.data());
  return tape.make(std::move(out), {x, w}, [R, N, K](Node<S>& self) {
    auto& x = *self.parents[0];
    auto& w = *self.parents[1];
    if (x.needs_grad) {
      x.ensure_grad();
      gemm_nt(R, K, N, self.grad.data(), w.val.data(), x.grad.data());
    }
    if (w.needs_grad) {
      w.ensure_grad();
      gemm_tn(K, N, R, x.val.data(), self.grad.data(), w.grad.data());
    }
  });
}

template <class S>
NodeP<S> add(Tape<S>& tape, NodeP<S> a, NodeP<S> b) {
  check_same_shape(a->val, b->val, "add");
  Tensor<S> out(a->val.shape);
  for (long i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
  return tape.make(std::move(out), {a, b}, [](Node<S>& self) {
    for (int p = 0; p < 2; ++p) {
      auto& parent = *self.parents[p];
      if (!parent.needs_grad) continue;
      parent.ensure_grad();
      for (long i = 0; i < self.grad.size(); ++i)
        parent.grad.v[i] += self.grad.v[i];
    }
  });
}

template <class S>
NodeP<S> mul(Tape<S>& tape, NodeP<S> a, NodeP<S> b) {
  check_same_shape(a->val, b->val, "mul");
  Tensor<S> out(a->val.shape);
  for (long i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
  return tape.make(std::move(out), {a, b}, [](Node<S>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.needs_grad) {
      a.ensure_grad();
      for (long i = 0; i < self.grad.size(); ++i)
        a.grad.v[i] += self.grad.v[i] * b.val.v[i];
    }
    if (b.needs_grad) {
      b.ensure_grad();
      for (long i = 0; i < self.grad.size(); ++i)
        b.grad.v[i] += self.grad.v[i] * a.val.v[i];
    }
  });
}

template <class S>
NodeP<S> scale(Tape<S>& tape, NodeP<S> a, S factor) {
  Tensor<S> out(a->val.shape);
  for (long i = 0; i < out.size(); ++i) out.v[i] = a->val.v[i] * factor;
  return tape.make(std::move(out), {a}, [factor](Node<S>& self) {
    auto& a = *self.parents[0];
    if (!a.needs_grad) return;
    a.ensure_grad();
    for (long i = 0; i < self.grad.size(); ++i)
      a.grad.v[i] += self.grad.v[i] * factor;
  });
}

// Scales every trailing vector x[r, :] by weight[r]. Used to select between
// the projected multi-hot rows and the token embeddings per position.
template <class S>
NodeP<S> scale_rows(Tape<S>& tape, NodeP<S> x, std::vector<S> weights) {
  const int H = x->val.shape.back();
  const long R = x->val.size() / H;
  if (static_cast<long>(weights.size()) != R)
    throw ConfigError("scale_rows: weight count mismatch");
  Tensor<S> out(x->val.shape);
  for (long r = 0; r < R; ++r)
    for (int h = 0; h < H; ++h)
      out.v[r * H + h] = x->val.v[r * H + h] * weights[r];
  return tape.make(std::move(out), {x},
                   [H, R, w = std::move(weights)](Node<S>& self) {
                     auto& x = *self.parents[0];
                     if (!x.needs_grad) return;
                     x.ensure_grad();
                     for (long r = 0; r < R; ++r)
                       for (int h = 0; h < H; ++h)
                         x.grad.v[r * H + h] += self.grad.v[r * H + h] * w[r];
                   });
}

// table [V, H] gathered by ids -> [ids.size() as lead shape, H]
template <class S>
NodeP<S> embed(Tape<S>& tape, NodeP<S> table, std::vector<int> ids,
               std::vector<int> lead_shape) {
  const int V = table->val.dim(0);
  const int H = table->val.dim(1);
  if (Tensor<S>::count(lead_shape) != static_cast<long>(ids.size()))
    throw ConfigError("embed: id count does not match shape");
  std::vector<int> out_shape = lead_shape;
  out_shape.push_back(H);
  Tensor<S> out(out_shape);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V) throw DataError("embed: id out of range");
    const S* src = table->val.data() + static_cast<long>(ids[i]) * H;
    S* dst = out.data() + static_cast<long>(i) * H;
    for (int h = 0; h < H; ++h) dst[h] = src[h];
  }
  return tape.make(std::move(out), {table},
                   [H, ids = std::move(ids)](Node<S>& self) {
                     auto& table = *self.parents[0];
                     if (!table.needs_grad) return;
                     table.ensure_grad();
                     for (size_t i = 0; i < ids.size(); ++i) {
                       const S* g = self.grad.data() + static_cast<long>(i) * H;
                       S* dst = table.grad.data() +
                                static_cast<long>(ids[i]) * H;
                       for (int h = 0; h < H; ++h) dst[h] += g[h];
                     }
                   });
}

// y = x * gain / rms(x) per trailing vector.
template <class S>
NodeP<S> rmsnorm(Tape<S>& tape, NodeP<S> x, NodeP<S> gain,
                 S eps = S(1e-5)) {
  const int H = x->val.shape.back();
  if (gain->val.ndim() != 1 || gain->val.dim(0) != H)
    throw ConfigError("rmsnorm: gain shape mismatch " +
                      shape_str(gain->val.shape));
  const long R = x->val.size() / H;
  Tensor<S> out(x->val.shape);
  std::vector<S> inv(R);
  for (long r = 0; r < R; ++r) {
    const S* xr = x->val.data() + r * H;
    S ms = S(0);
    for (int h = 0; h < H; ++h) ms += xr[h] * xr[h];
    ms /= static_cast<S>(H);
    inv[r] = S(1) / std::sqrt(ms + eps);
    S* yr = out.data() + r * H;
    for (int h = 0; h < H; ++h) yr[h] = xr[h] * inv[r] * gain->val.v[h];
  }
  return tape.make(
      std::move(out), {x, gain}, [H, R, inv = std::move(inv)](Node<S>& self) {
        auto& x = *self.parents[0];
        auto& gain = *self.parents[1];
        for (long r = 0; r < R; ++r) {
          const S* xr = x.val.data() + r * H;
          const S* gr = self.grad.data() + r * H;
          if (gain.needs_grad) {
            gain.ensure_grad();
            for (int h = 0; h < H; ++h)
              gain.grad.v[h] += gr[h] * xr[h] * inv[r];
          }
          if (x.needs_grad) {
            x.ensure_grad();
            S dot = S(0);
            for (int h = 0; h < H; ++h) dot += gr[h] * gain.val.v[h] * xr[h];
            const S k = dot * inv[r] * inv[r] * inv[r] / static_cast<S>(H);
            S* xg = x.grad.data() + r * H;
            for (int h = 0; h < H; ++h)
              xg[h] += gr[h] * gain.val.v[h] * inv[r] - xr[h] * k;
          }
        }
      });
}

// Rotary rotation over pairs (2i, 2i+1) of x [G, T, Dh]; position = t.
template <class S>
NodeP<S> rope(Tape<S>& tape, NodeP<S> x, double base) {
  if (x->val.ndim() != 3) throw ConfigError("rope expects [G, T, Dh]");
  const int G = x->val.dim(0), T = x->val.dim(1), Dh = x->val.dim(2);
  if (Dh % 2 != 0) throw ConfigError("rope: head dim must be even");
  // cos/sin table [T, Dh/2]
  std::vector<S> cs(static_cast<size_t>(T) * Dh);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < Dh / 2; ++i) {
      const double theta =
          t * std::pow(base, -2.0 * i / static_cast<double>(Dh));
      cs[(static_cast<size_t>(t) * Dh / 2 + i) * 2] = static_cast<S>(std::cos(theta));
      cs[(static_cast<size_t>(t) * Dh / 2 + i) * 2 + 1] =
          static_cast<S>(std::sin(theta));
    }
  }
  Tensor<S> out(x->val.shape);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) {
      const S* xr = x->val.data() + (static_cast<long>(g) * T + t) * Dh;
      S* yr = out.data() + (static_cast<long>(g) * T + t) * Dh;
      const S* c = cs.data() + static_cast<size_t>(t) * Dh;
      for (int i = 0; i < Dh / 2; ++i) {
        const S co = c[2 * i], si = c[2 * i + 1];
        yr[2 * i] = xr[2 * i] * co - xr[2 * i + 1] * si;
        yr[2 * i + 1] = xr[2 * i] * si + xr[2 * i + 1] * co;
      }
    }
  }
  return tape.make(std::move(out), {x},
                   [G, T, Dh, cs = std::move(cs)](Node<S>& self) {
                     auto& x = *self.parents[0];
                     if (!x.needs_grad) return;
                     x.ensure_grad();
                     for (int g = 0; g < G; ++g) {
                       for (int t = 0; t < T; ++t) {
                         const S* gr = self.grad.data() +
                                       (static_cast<long>(g) * T + t) * Dh;
                         S* xg = x.grad.data() +
                                 (static_cast<long>(g) * T + t) * Dh;
                         const S* c = cs.data() + static_cast<size_t>(t) * Dh;
                         for (int i = 0; i < Dh / 2; ++i) {
                           const S co = c[2 * i], si = c[2 * i + 1];
                           xg[2 * i] += gr[2 * i] * co + gr[2 * i + 1] * si;
                           xg[2 * i + 1] +=
                               -gr[2 * i] * si + gr[2 * i + 1] * co;
                         }
                       }
                     }
                   });
}

// [B, T, H*Dh] -> [B*H, T, Dh]
template <class S>
NodeP<S> split_heads(Tape<S>& tape, NodeP<S> x, int heads) {
  if (x->val.ndim() != 3) throw ConfigError("split_heads expects [B, T, H*Dh]");
  const int B = x->val.dim(0), T = x->val.dim(1), HD = x->val.dim(2);
  if (HD % heads != 0) throw ConfigError("split_heads: hidden not divisible");
  const int Dh = HD / heads;
  Tensor<S> out({B * heads, T, Dh});
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < heads; ++h) {
        const S* src =
            x->val.data() + (static_cast<long>(b) * T + t) * HD + h * Dh;
        S* dst = out.data() +
                 ((static_cast<long>(b) * heads + h) * T + t) * Dh;
        for (int i = 0; i < Dh; ++i) dst[i] = src[i];
      }
  return tape.make(std::move(out), {x}, [B, T, heads, Dh, HD](Node<S>& self) {
    auto& x = *self.parents[0];
    if (!x.needs_grad) return;
    x.ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t)
        for (int h = 0; h < heads; ++h) {
          const S* src = self.grad.data() +
                         ((static_cast<long>(b) * heads + h) * T + t) * Dh;
          S* dst = x.grad.data() + (static_cast<long>(b) * T + t) * HD + h * Dh;
          for (int i = 0; i < Dh; ++i) dst[i] += src[i];
        }
  });
}

// [B*H, T, Dh] -> [B, T, H*Dh]
template <class S>
NodeP<S> merge_heads(Tape<S>& tape, NodeP<S> x, int batch) {
  if (x->val.ndim() != 3) throw ConfigError("merge_heads expects [B*H, T, Dh]");
  const int GH = x->val.dim(0), T = x->val.dim(1), Dh = x->val.dim(2);
  if (GH % batch != 0) throw ConfigError("merge_heads: bad batch");
  const int heads = GH / batch;
  Tensor<S> out({batch, T, heads * Dh});
  for (int b = 0; b < batch; ++b)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < T; ++t) {
        const S* src =
            x->val.data() + ((static_cast<long>(b) * heads + h) * T + t) * Dh;
        S* dst = out.data() +
                 (static_cast<long>(b) * T + t) * (heads * Dh) + h * Dh;
        for (int i = 0; i < Dh; ++i) dst[i] = src[i];
      }
  return tape.make(std::move(out), {x}, [batch, heads, T, Dh](Node<S>& self) {
    auto& x = *self.parents[0];
    if (!x.needs_grad) return;
    x.ensure_grad();
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h)
        for (int t = 0; t < T; ++t) {
          const S* src = self.grad.data() +
                         (static_cast<long>(b) * T + t) * (heads * Dh) + h * Dh;
          S* dst = x.grad.data() +
                   ((static_cast<long>(b) * heads + h) * T + t) * Dh;
          for (int i = 0; i < Dh; ++i) dst[i] += src[i];
        }
  });
}

// Fused causal attention over q, k, v [G, T, Dh]. Scores for keys j > t are
// never computed, so positions are bit-exactly independent of later tokens.
template <class S>
NodeP<S> causal_attention(Tape<S>& tape, NodeP<S> q, NodeP<S> k, NodeP<S> v) {
  check_same_shape(q->val, k->val, "attention");
  check_same_shape(q->val, v->val, "attention");
  if (q->val.ndim() != 3) throw ConfigError("attention expects [G, T, Dh]");
  const int G = q->val.dim(0), T = q->val.dim(1), Dh = q->val.dim(2);
  const S scale = S(1) / std::sqrt(static_cast<S>(Dh));
  auto weights = std::make_shared<Tensor<S>>(
      std::vector<int>{G, T, T});  // lower triangle used
  Tensor<S> out({G, T, Dh});
  std::vector<S> row(T);
  for (int g = 0; g < G; ++g) {
    const S* qg = q->val.data() + static_cast<long>(g) * T * Dh;
    const S* kg = k->val.data() + static_cast<long>(g) * T * Dh;
    const S* vg = v->val.data() + static_cast<long>(g) * T * Dh;
    for (int t = 0; t < T; ++t) {
      const S* qt = qg + static_cast<long>(t) * Dh;
      S mx = -std::numeric_limits<S>::infinity();
      for (int j = 0; j <= t; ++j) {
        const S* kj = kg + static_cast<long>(j) * Dh;
        S acc = S(0);
        for (int i = 0; i < Dh; ++i) acc += qt[i] * kj[i];
        row[j] = acc * scale;
        mx = std::max(mx, row[j]);
      }
      S norm = S(0);
      for (int j = 0; j <= t; ++j) {
        row[j] = std::exp(row[j] - mx);
        norm += row[j];
      }
      S* wt = weights->data() + (static_cast<long>(g) * T + t) * T;
      for (int j = 0; j <= t; ++j) wt[j] = row[j] / norm;
      S* ot = out.data() + (static_cast<long>(g) * T + t) * Dh;
      for (int j = 0; j <= t; ++j) {
        const S w = wt[j];
        const S* vj = vg + static_cast<long>(j) * Dh;
        for (int i = 0; i < Dh; ++i) ot[i] += w * vj[i];
      }
    }
  }
  return tape.make(
      std::move(out), {q, k, v}, [G, T, Dh, scale, weights](Node<S>& self) {
        auto& q = *self.parents[0];
        auto& k = *self.parents[1];
        auto& v = *self.parents[2];
        q.ensure_grad();
        k.ensure_grad();
        v.ensure_grad();
        std::vector<S> dw(T);
        for (int g = 0; g < G; ++g) {
          const long base = static_cast<long>(g) * T * Dh;
          const S* qg = q.val.data() + base;
          const S* kg = k.val.data() + base;
          const S* vg = v.val.data() + base;
          S* dqg = q.grad.data() + base;
          S* dkg = k.grad.data() + base;
          S* dvg = v.grad.data() + base;
          for (int t = 0; t < T; ++t) {
            const S* gt = self.grad.data() + (static_cast<long>(g) * T + t) * Dh;
            const S* wt = weights->data() + (static_cast<long>(g) * T + t) * T;
            S wdot = S(0);
            for (int j = 0; j <= t; ++j) {
              const S* vj = vg + static_cast<long>(j) * Dh;
              S acc = S(0);
              for (int i = 0; i < Dh; ++i) acc += gt[i] * vj[i];
              dw[j] = acc;
              wdot += wt[j] * acc;
              S* dvj = dvg + static_cast<long>(j) * Dh;
              for (int i = 0; i < Dh; ++i) dvj[i] += wt[j] * gt[i];
            }
            const S* qt = qg + static_cast<long>(t) * Dh;
            S* dqt = dqg + static_cast<long>(t) * Dh;
            for (int j = 0; j <= t; ++j) {
              const S ds = wt[j] * (dw[j] - wdot) * scale;
              const S* kj = kg + static_cast<long>(j) * Dh;
              S* dkj = dkg + static_cast<long>(j) * Dh;
              for (int i = 0; i < Dh; ++i) {
                dqt[i] += ds * kj[i];
                dkj[i] += ds * qt[i];
              }
            }
          }
        }
      });
}

// y = silu(a) * b = a * sigmoid(a) * b
template <class S>
NodeP<S> silu_gate(Tape<S>& tape, NodeP<S> a, NodeP<S> b) {
  check_same_shape(a->val, b->val, "silu_gate");
  Tensor<S> out(a->val.shape);
  for (long i = 0; i < out.size(); ++i) {
    const S x = a->val.v[i];
    const S sig = S(1) / (S(1) + std::exp(-x));
    out.v[i] = x * sig * b->val.v[i];
  }
  return tape.make(std::move(out), {a, b}, [](Node<S>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    for (long i = 0; i < self.grad.size(); ++i) {
      const S x = a.val.v[i];
      const S sig = S(1) / (S(1) + std::exp(-x));
      const S silu = x * sig;
      if (a.needs_grad) {
        a.ensure_grad();
        const S dsilu = sig * (S(1) + x * (S(1) - sig));
        a.grad.v[i] += self.grad.v[i] * b.val.v[i] * dsilu;
      }
      if (b.needs_grad) {
        b.ensure_grad();
        b.grad.v[i] += self.grad.v[i] * silu;
      }
    }
  });
}

// Max-subtracted softmax over the trailing dimension.
template <class S>
NodeP<S> softmax(Tape<S>& tape, NodeP<S> x) {
  const int C = x->val.shape.back();
  const long R = x->val.size() / C;
  Tensor<S> out(x->val.shape);
  for (long r = 0; r < R; ++r) {
    const S* xr = x->val.data() + r * C;
    S* yr = out.data() + r * C;
    S mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    S norm = S(0);
    for (int c = 0; c < C; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      norm += yr[c];
    }
    for (int c = 0; c < C; ++c) yr[c] /= norm;
  }
  return tape.make(std::move(out), {x}, [C, R](Node<S>& self) {
    auto& x = *self.parents[0];
    if (!x.needs_grad) return;
    x.ensure_grad();
    for (long r = 0; r < R; ++r) {
      const S* y = self.val.data() + r * C;
      const S* g = self.grad.data() + r * C;
      S dot = S(0);
      for (int c = 0; c < C; ++c) dot += y[c] * g[c];
      S* xg = x.grad.data() + r * C;
      for (int c = 0; c < C; ++c) xg[c] += y[c] * (g[c] - dot);
    }
  });
}

template <class S>
NodeP<S> sum_all(Tape<S>& tape, NodeP<S> x) {
  Tensor<S> out({1});
  for (long i = 0; i < x->val.size(); ++i) out.v[0] += x->val.v[i];
  return tape.make(std::move(out), {x}, [](Node<S>& self) {
    auto& x = *self.parents[0];
    if (!x.needs_grad) return;
    x.ensure_grad();
    for (long i = 0; i < x.grad.size(); ++i) x.grad.v[i] += self.grad.v[0];
  });
}

// Mean categorical cross-entropy over positions with weight > 0.
// logits [R, V] flattened rows, one target id and weight per row.
template <class S>
NodeP<S> ce_loss(Tape<S>& tape, NodeP<S> logits, std::vector<int> targets,
                 std::vector<S> weights) {
  const int V = logits->val.shape.back();
  const long R = logits->val.size() / V;
  if (static_cast<long>(targets.size()) != R ||
      static_cast<long>(weights.size()) != R)
    throw ConfigError("ce_loss: target/weight count mismatch");
  S wsum = S(0);
  for (S w : weights) wsum += w;
  if (wsum <= S(0)) throw DataError("ce_loss: no loss-active positions");
  Tensor<S> out({1});
  S total = S(0);
  for (long r = 0; r < R; ++r) {
    if (weights[r] == S(0)) continue;
    const S* z = logits->val.data() + r * V;
    S mx = z[0];
    for (int c = 1; c < V; ++c) mx = std::max(mx, z[c]);
    S lse = S(0);
    for (int c = 0; c < V; ++c) lse += std::exp(z[c] - mx);
    lse = std::log(lse) + mx;
    total += weights[r] * (lse - z[targets[r]]);
  }
  out.v[0] = total / wsum;
  return tape.make(std::move(out), {logits},
                   [V, R, wsum, targets = std::move(targets),
                    weights = std::move(weights)](Node<S>& self) {
                     auto& logits = *self.parents[0];
                     if (!logits.needs_grad) return;
                     logits.ensure_grad();
                     const S g = self.grad.v[0];
                     for (long r = 0; r < R; ++r) {
                       if (weights[r] == S(0)) continue;
                       const S* z = logits.val.data() + r * V;
                       S* zg = logits.grad.data() + r * V;
                       S mx = z[0];
                       for (int c = 1; c < V; ++c) mx = std::max(mx, z[c]);
                       S norm = S(0);
                       for (int c = 0; c < V; ++c) norm += std::exp(z[c] - mx);
                       const S k = g * weights[r] / wsum;
                       for (int c = 0; c < V; ++c)
                         zg[c] += k * std::exp(z[c] - mx) / norm;
                       zg[targets[r]] -= k;
                     }
                   });
}

// Mean element-wise binary cross-entropy with logits over active rows.
// logits [R, W]; targets same layout (0/1); one weight per row.
template <class S>
NodeP<S> bce_loss(Tape<S>& tape, NodeP<S> logits, const std::vector<S>& targets,
                  std::vector<S> weights) {
  const int W = logits->val.shape.back();
  const long R = logits->val.size() / W;
  if (static_cast<long>(targets.size()) != logits->val.size() ||
      static_cast<long>(weights.size()) != R)
    throw ConfigError("bce_loss: target/weight count mismatch");
  S wsum = S(0);
  for (S w : weights) wsum += w;
  if (wsum <= S(0)) throw DataError("bce_loss: no loss-active positions");
  const S denom = wsum * static_cast<S>(W);
  Tensor<S> out({1});
  S total = S(0);
  for (long r = 0; r < R; ++r) {
    if (weights[r] == S(0)) continue;
    const S* z = logits->val.data() + r * W;
    const S* y = targets.data() + r * W;
    S acc = S(0);
    for (int c = 0; c < W; ++c) {
      const S zz = z[c];
      acc += std::max(zz, S(0)) - zz * y[c] + std::log1p(std::exp(-std::abs(zz)));
    }
    total += weights[r] * acc;
  }
  out.v[0] = total / denom;
  auto targets_copy = std::make_shared<std::vector<S>>(targets);
  return tape.make(std::move(out), {logits},
                   [W, R, denom, targets_copy,
                    weights = std::move(weights)](Node<S>& self) {
                     auto& logits = *self.parents[0];
                     if (!logits.needs_grad) return;
                     logits.ensure_grad();
                     const S g = self.grad.v[0];
                     for (long r = 0; r < R; ++r) {
                       if (weights[r] == S(0)) continue;
                       const S* z = logits.val.data() + r * W;
                       const S* y = targets_copy->data() + r * W;
                       S* zg = logits.grad.data() + r * W;
                       const S k = g * weights[r] / denom;
                       for (int c = 0; c < W; ++c) {
                         const S sig = S(1) / (S(1) + std::exp(-z[c]));
                         zg[c] += k * (sig - y[c]);
                       }
                     }
                   });
}

}  // namespace fillerlab
