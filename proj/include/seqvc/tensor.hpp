// seqvc/tensor.hpp
//
// Reverse-mode differentiable tensors over an explicit tape, with exactly
// the primitives the conversion networks need.

// Copyright 2026  seqvc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SEQVC_TENSOR_HPP_
#define SEQVC_TENSOR_HPP_

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <utility>

#include "seqvc/common.hpp"

namespace seqvc {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
  std::vector<int> shape;
  std::vector<real> v;
  std::vector<real> g;  // same size as v once touched by backward
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, bool rg = false)
      : shape(std::move(s)), requires_grad(rg) {
    v.assign(count(shape), real(0));
  }

  static std::size_t count(const std::vector<int> &s) {
    std::size_t n = 1;
    for (int d : s) {
      require_shape(d >= 0, "negative extent");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), real(0));
  }
  void zero_grad() {
    if (!g.empty()) std::fill(g.begin(), g.end(), real(0));
  }
};

inline TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false) {
  return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

inline TensorPtr full_tensor(std::vector<int> shape, real value) {
  auto t = make_tensor(std::move(shape));
  std::fill(t->v.begin(), t->v.end(), value);
  return t;
}

inline TensorPtr scalar_tensor(real value) {
  auto t = make_tensor({1});
  t->v[0] = value;
  return t;
}

// ---------------------------------------------------------------------------
// Tape

// Global switch for the finiteness invariant: every op output and every
// gradient produced during backward is scanned; NaN/Inf raises NumericError.
inline bool &finite_checks_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

inline void check_finite(const Tensor &t, const char *where) {
  if (!finite_checks_enabled()) return;
  if (!all_finite(t.v)) throw NumericError(std::string("non-finite value in ") + where);
}

class Tape {
 public:
  struct Node {
    std::function<void()> backward;
    TensorPtr out;  // kept alive so backward can see output grads
  };

  void record(TensorPtr out, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(backward), std::move(out)});
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root)=1 and sweeps the tape in reverse. Gradients
  // accumulate into Tensor::g; callers zero parameter grads beforehand.
  void backward(const TensorPtr &root) {
    require_shape(root->size() == 1, "backward root must be scalar");
    root->ensure_grad();
    root->g[0] = real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out->g.empty()) continue;  // nothing flowed into this node
      it->backward();
    }
    if (finite_checks_enabled()) {
      for (const auto &n : nodes_) {
        if (!n.out->g.empty() && !all_finite(n.out->g))
          throw NumericError("non-finite gradient during backward");
      }
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

inline Tape *&active_tape_slot() {
  thread_local Tape *t = nullptr;
  return t;
}
inline Tape *active_tape() { return active_tape_slot(); }

// RAII: installs a fresh tape for the enclosed forward/backward pass.
class TapeScope {
 public:
  TapeScope() : prev_(active_tape_slot()) { active_tape_slot() = &tape_; }
  ~TapeScope() { active_tape_slot() = prev_; }
  TapeScope(const TapeScope &) = delete;
  TapeScope &operator=(const TapeScope &) = delete;
  Tape &tape() { return tape_; }

 private:
  Tape tape_;
  Tape *prev_;
};

// RAII: suspends recording (eval-mode forward passes).
class NoGradScope {
 public:
  NoGradScope() : prev_(active_tape_slot()) { active_tape_slot() = nullptr; }
  ~NoGradScope() { active_tape_slot() = prev_; }
  NoGradScope(const NoGradScope &) = delete;
  NoGradScope &operator=(const NoGradScope &) = delete;

 private:
  Tape *prev_;
};

namespace detail {

inline bool want_grad(std::initializer_list<const TensorPtr *> ins) {
  if (active_tape() == nullptr) return false;
  for (const TensorPtr *p : ins) {
    if (*p && (*p)->requires_grad) return true;
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives

inline TensorPtr add(const TensorPtr &a, const TensorPtr &b) {
  require_shape(a->shape == b->shape, "add: shape mismatch");
  auto out = make_tensor(a->shape);
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = a->v[i] + b->v[i];
  check_finite(*out, "add");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    active_tape()->record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->g.size(); ++i) b->g[i] += out->g[i];
      }
    });
  }
  return out;
}

inline TensorPtr mul(const TensorPtr &a, const TensorPtr &b) {
  require_shape(a->shape == b->shape, "mul: shape mismatch");
  auto out = make_tensor(a->shape);
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = a->v[i] * b->v[i];
  check_finite(*out, "mul");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    active_tape()->record(out, [a, b, out]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i] * b->v[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->g.size(); ++i) b->g[i] += out->g[i] * a->v[i];
      }
    });
  }
  return out;
}

inline TensorPtr sigmoid(const TensorPtr &x) {
  auto out = make_tensor(x->shape);
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = real(1) / (real(1) + std::exp(-x->v[i]));
  check_finite(*out, "sigmoid");
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->g.size(); ++i) {
        const real y = out->v[i];
        x->g[i] += out->g[i] * y * (real(1) - y);
      }
    });
  }
  return out;
}

inline TensorPtr scale(const TensorPtr &x, real c) {
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->size(); ++i) out->v[i] = c * x->v[i];
  check_finite(*out, "scale");
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out, c]() {
      x->ensure_grad();
      for (std::size_t i = 0; i < out->g.size(); ++i) x->g[i] += c * out->g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape primitives (batch/channel/time tensors)

// First `c1-c0` residual channels of a {B,C,T} tensor.
inline TensorPtr slice_channels(const TensorPtr &x, int c0, int c1) {
  require_shape(x->shape.size() == 3, "slice_channels: need {B,C,T}");
  const int B = x->dim(0), C = x->dim(1), T = x->dim(2);
  require_shape(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels: bad range");
  const int Cs = c1 - c0;
  auto out = make_tensor({B, Cs, T});
  for (int b = 0; b < B; ++b)
    std::memcpy(&out->v[static_cast<std::size_t>(b) * Cs * T],
                &x->v[(static_cast<std::size_t>(b) * C + c0) * T],
                sizeof(real) * static_cast<std::size_t>(Cs) * T);
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out, B, C, T, c0, Cs]() {
      x->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const real *go = &out->g[static_cast<std::size_t>(b) * Cs * T];
        real *gx = &x->g[(static_cast<std::size_t>(b) * C + c0) * T];
        for (std::size_t i = 0; i < static_cast<std::size_t>(Cs) * T; ++i) gx[i] += go[i];
      }
    });
  }
  return out;
}

// Columns [c0, c1) of a {R,C} matrix.
inline TensorPtr slice_cols(const TensorPtr &x, int c0, int c1) {
  require_shape(x->shape.size() == 2, "slice_cols: need {R,C}");
  const int R = x->dim(0), C = x->dim(1);
  require_shape(0 <= c0 && c0 < c1 && c1 <= C, "slice_cols: bad range");
  const int W = c1 - c0;
  auto out = make_tensor({R, W});
  for (int r = 0; r < R; ++r)
    std::memcpy(&out->v[static_cast<std::size_t>(r) * W],
                &x->v[static_cast<std::size_t>(r) * C + c0], sizeof(real) * static_cast<std::size_t>(W));
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out, R, C, c0, W]() {
      x->ensure_grad();
      for (int r = 0; r < R; ++r) {
        const real *go = &out->g[static_cast<std::size_t>(r) * W];
        real *gx = &x->g[static_cast<std::size_t>(r) * C + c0];
        for (int c = 0; c < W; ++c) gx[c] += go[c];
      }
    });
  }
  return out;
}

// One batch item's frames [start, start+len) as a {C,len} matrix.
inline TensorPtr item_window(const TensorPtr &x, int item, int start, int len) {
  require_shape(x->shape.size() == 3, "item_window: need {B,C,T}");
  const int B = x->dim(0), C = x->dim(1), T = x->dim(2);
  require_shape(0 <= item && item < B, "item_window: bad item");
  require_shape(start >= 0 && len >= 1 && start + len <= T, "item_window: bad range");
  auto out = make_tensor({C, len});
  for (int c = 0; c < C; ++c)
    std::memcpy(&out->v[static_cast<std::size_t>(c) * len],
                &x->v[(static_cast<std::size_t>(item) * C + c) * T + start],
                sizeof(real) * static_cast<std::size_t>(len));
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out, item, start, len, C, T]() {
      x->ensure_grad();
      for (int c = 0; c < C; ++c) {
        const real *go = &out->g[static_cast<std::size_t>(c) * len];
        real *gx = &x->g[(static_cast<std::size_t>(item) * C + c) * T + start];
        for (int t = 0; t < len; ++t) gx[t] += go[t];
      }
    });
  }
  return out;
}

// Reassembles per-item {C,len_i} matrices into a zero-padded {B,C,Tmax} batch.
inline TensorPtr stack_items(const std::vector<TensorPtr> &items, int t_max) {
  require_shape(!items.empty(), "stack_items: empty");
  const int C = items[0]->dim(0);
  const int B = static_cast<int>(items.size());
  bool rg = false;
  for (const auto &it : items) {
    require_shape(it->shape.size() == 2 && it->dim(0) == C, "stack_items: channel mismatch");
    require_shape(it->dim(1) <= t_max, "stack_items: item longer than t_max");
    rg = rg || it->requires_grad;
  }
  auto out = make_tensor({B, C, t_max});
  for (int b = 0; b < B; ++b) {
    const int len = items[static_cast<std::size_t>(b)]->dim(1);
    for (int c = 0; c < C; ++c)
      std::memcpy(&out->v[(static_cast<std::size_t>(b) * C + c) * t_max],
                  &items[static_cast<std::size_t>(b)]->v[static_cast<std::size_t>(c) * len],
                  sizeof(real) * static_cast<std::size_t>(len));
  }
  if (rg && active_tape() != nullptr) {
    out->requires_grad = true;
    auto kept = items;
    active_tape()->record(out, [kept, out, B, C, t_max]() {
      for (int b = 0; b < B; ++b) {
        const auto &it = kept[static_cast<std::size_t>(b)];
        if (!it->requires_grad) continue;
        it->ensure_grad();
        const int len = it->dim(1);
        for (int c = 0; c < C; ++c) {
          const real *go = &out->g[(static_cast<std::size_t>(b) * C + c) * t_max];
          real *gi = &it->g[static_cast<std::size_t>(c) * len];
          for (int t = 0; t < len; ++t) gi[t] += go[t];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix primitives (2-D, used by the attention path; sizes are small)

// scale * (a^T b) for a {D,N}, b {D,M} -> {N,M}
inline TensorPtr matmul_tn(const TensorPtr &a, const TensorPtr &b, real s = real(1)) {
  require_shape(a->shape.size() == 2 && b->shape.size() == 2 && a->dim(0) == b->dim(0),
                "matmul_tn: inner dim mismatch");
  const int D = a->dim(0), N = a->dim(1), M = b->dim(1);
  auto out = make_tensor({N, M});
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) {
      real acc = 0;
      for (int d = 0; d < D; ++d)
        acc += a->v[static_cast<std::size_t>(d) * N + n] * b->v[static_cast<std::size_t>(d) * M + m];
      out->v[static_cast<std::size_t>(n) * M + m] = s * acc;
    }
  check_finite(*out, "matmul_tn");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    active_tape()->record(out, [a, b, out, s, D, N, M]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int d = 0; d < D; ++d)
          for (int n = 0; n < N; ++n) {
            real acc = 0;
            for (int m = 0; m < M; ++m)
              acc += out->g[static_cast<std::size_t>(n) * M + m] * b->v[static_cast<std::size_t>(d) * M + m];
            a->g[static_cast<std::size_t>(d) * N + n] += s * acc;
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int d = 0; d < D; ++d)
          for (int m = 0; m < M; ++m) {
            real acc = 0;
            for (int n = 0; n < N; ++n)
              acc += out->g[static_cast<std::size_t>(n) * M + m] * a->v[static_cast<std::size_t>(d) * N + n];
            b->g[static_cast<std::size_t>(d) * M + m] += s * acc;
          }
      }
    });
  }
  return out;
}

// a b for a {D,N}, b {N,M} -> {D,M}
inline TensorPtr matmul_nn(const TensorPtr &a, const TensorPtr &b) {
  require_shape(a->shape.size() == 2 && b->shape.size() == 2 && a->dim(1) == b->dim(0),
                "matmul_nn: inner dim mismatch");
  const int D = a->dim(0), N = a->dim(1), M = b->dim(1);
  auto out = make_tensor({D, M});
  for (int d = 0; d < D; ++d)
    for (int m = 0; m < M; ++m) {
      real acc = 0;
      for (int n = 0; n < N; ++n)
        acc += a->v[static_cast<std::size_t>(d) * N + n] * b->v[static_cast<std::size_t>(n) * M + m];
      out->v[static_cast<std::size_t>(d) * M + m] = acc;
    }
  check_finite(*out, "matmul_nn");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    active_tape()->record(out, [a, b, out, D, N, M]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int d = 0; d < D; ++d)
          for (int n = 0; n < N; ++n) {
            real acc = 0;
            for (int m = 0; m < M; ++m)
              acc += out->g[static_cast<std::size_t>(d) * M + m] * b->v[static_cast<std::size_t>(n) * M + m];
            a->g[static_cast<std::size_t>(d) * N + n] += acc;
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m) {
            real acc = 0;
            for (int d = 0; d < D; ++d)
              acc += out->g[static_cast<std::size_t>(d) * M + m] * a->v[static_cast<std::size_t>(d) * N + n];
            b->g[static_cast<std::size_t>(n) * M + m] += acc;
          }
      }
    });
  }
  return out;
}

// a b^T for a {N,M}, b {K,M} -> {N,K}; handles a==b (both paths accumulate).
inline TensorPtr matmul_nt(const TensorPtr &a, const TensorPtr &b) {
  require_shape(a->shape.size() == 2 && b->shape.size() == 2 && a->dim(1) == b->dim(1),
                "matmul_nt: inner dim mismatch");
  const int N = a->dim(0), M = a->dim(1), K = b->dim(0);
  auto out = make_tensor({N, K});
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      real acc = 0;
      for (int m = 0; m < M; ++m)
        acc += a->v[static_cast<std::size_t>(n) * M + m] * b->v[static_cast<std::size_t>(k) * M + m];
      out->v[static_cast<std::size_t>(n) * K + k] = acc;
    }
  check_finite(*out, "matmul_nt");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    active_tape()->record(out, [a, b, out, N, M, K]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < M; ++m) {
            real acc = 0;
            for (int k = 0; k < K; ++k)
              acc += out->g[static_cast<std::size_t>(n) * K + k] * b->v[static_cast<std::size_t>(k) * M + m];
            a->g[static_cast<std::size_t>(n) * M + m] += acc;
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int k = 0; k < K; ++k)
          for (int m = 0; m < M; ++m) {
            real acc = 0;
            for (int n = 0; n < N; ++n)
              acc += out->g[static_cast<std::size_t>(n) * K + k] * a->v[static_cast<std::size_t>(n) * M + m];
            b->g[static_cast<std::size_t>(k) * M + m] += acc;
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax over the first axis: every column of the result sums to 1.

inline TensorPtr softmax_columns(const TensorPtr &s) {
  require_shape(s->shape.size() == 2, "softmax_columns: need {N,M}");
  const int N = s->dim(0), M = s->dim(1);
  require_shape(N >= 1 && M >= 1, "softmax_columns: empty");
  if (finite_checks_enabled() && !all_finite(s->v))
    throw NumericError("softmax_columns: non-finite input");
  auto out = make_tensor({N, M});
  for (int m = 0; m < M; ++m) {
    real mx = s->v[static_cast<std::size_t>(m)];
    for (int n = 1; n < N; ++n)
      mx = std::max(mx, s->v[static_cast<std::size_t>(n) * M + m]);
    real z = 0;
    for (int n = 0; n < N; ++n) {
      const real e = std::exp(s->v[static_cast<std::size_t>(n) * M + m] - mx);
      out->v[static_cast<std::size_t>(n) * M + m] = e;
      z += e;
    }
    for (int n = 0; n < N; ++n) out->v[static_cast<std::size_t>(n) * M + m] /= z;
  }
  if (detail::want_grad({&s})) {
    out->requires_grad = true;
    active_tape()->record(out, [s, out, N, M]() {
      s->ensure_grad();
      for (int m = 0; m < M; ++m) {
        real dot = 0;
        for (int n = 0; n < N; ++n) {
          const std::size_t i = static_cast<std::size_t>(n) * M + m;
          dot += out->g[i] * out->v[i];
        }
        for (int n = 0; n < N; ++n) {
          const std::size_t i = static_cast<std::size_t>(n) * M + m;
          s->g[i] += out->v[i] * (out->g[i] - dot);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar reductions

inline TensorPtr sum_all(const TensorPtr &x) {
  auto out = make_tensor({1});
  real acc = 0;
  for (real t : x->v) acc += t;
  out->v[0] = acc;
  check_finite(*out, "sum_all");
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    active_tape()->record(out, [x, out]() {
      x->ensure_grad();
      const real go = out->g[0];
      for (std::size_t i = 0; i < x->g.size(); ++i) x->g[i] += go;
    });
  }
  return out;
}

// sum_ij s * W_ij * |x_ij| with a constant weight matrix W.
inline TensorPtr weighted_abs_sum(const TensorPtr &x, std::vector<real> w, real s) {
  require_shape(x->size() == w.size(), "weighted_abs_sum: weight size mismatch");
  auto out = make_tensor({1});
  real acc = 0;
  for (std::size_t i = 0; i < x->size(); ++i) acc += w[i] * std::abs(x->v[i]);
  out->v[0] = s * acc;
  check_finite(*out, "weighted_abs_sum");
  if (detail::want_grad({&x})) {
    out->requires_grad = true;
    auto wk = std::make_shared<std::vector<real>>(std::move(w));
    active_tape()->record(out, [x, out, wk, s]() {
      x->ensure_grad();
      const real go = out->g[0] * s;
      for (std::size_t i = 0; i < x->g.size(); ++i) {
        const real xv = x->v[i];
        if (xv > 0)
          x->g[i] += go * (*wk)[i];
        else if (xv < 0)
          x->g[i] -= go * (*wk)[i];
      }
    });
  }
  return out;
}

// s * sum_n sum_d row_w[d] * |a_dn - b_dn| for a,b {D,N}. The per-feature
// weighted L1 norm used by every feature-space loss.
inline TensorPtr weighted_l1(const TensorPtr &a, const TensorPtr &b,
                             const std::vector<real> &row_w, real s = real(1)) {
  require_shape(a->shape == b->shape, "weighted_l1: shape mismatch");
  require_shape(a->shape.size() == 2, "weighted_l1: need {D,N}");
  const int D = a->dim(0), N = a->dim(1);
  require_shape(static_cast<int>(row_w.size()) == D, "weighted_l1: weight rows mismatch");
  auto out = make_tensor({1});
  real acc = 0;
  for (int d = 0; d < D; ++d) {
    const real wd = row_w[static_cast<std::size_t>(d)];
    const real *pa = &a->v[static_cast<std::size_t>(d) * N];
    const real *pb = &b->v[static_cast<std::size_t>(d) * N];
    real row = 0;
    for (int n = 0; n < N; ++n) row += std::abs(pa[n] - pb[n]);
    acc += wd * row;
  }
  out->v[0] = s * acc;
  check_finite(*out, "weighted_l1");
  if (detail::want_grad({&a, &b})) {
    out->requires_grad = true;
    auto wk = std::make_shared<std::vector<real>>(row_w);
    active_tape()->record(out, [a, b, out, wk, s, D, N]() {
      const real go = out->g[0] * s;
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int d = 0; d < D; ++d) {
        const real gw = go * (*wk)[static_cast<std::size_t>(d)];
        for (int n = 0; n < N; ++n) {
          const std::size_t i = static_cast<std::size_t>(d) * N + n;
          const real diff = a->v[i] - b->v[i];
          const real sg = diff > 0 ? gw : (diff < 0 ? -gw : real(0));
          if (a->requires_grad) a->g[i] += sg;
          if (b->requires_grad) b->g[i] -= sg;
        }
      }
    });
  }
  return out;
}

// sum_k coeff_k * term_k over scalar tensors.
inline TensorPtr add_scalars(const std::vector<TensorPtr> &terms, const std::vector<real> &coeffs) {
  require_shape(terms.size() == coeffs.size() && !terms.empty(), "add_scalars: size mismatch");
  auto out = make_tensor({1});
  bool rg = false;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    require_shape(terms[k]->size() == 1, "add_scalars: non-scalar term");
    out->v[0] += coeffs[k] * terms[k]->v[0];
    rg = rg || terms[k]->requires_grad;
  }
  check_finite(*out, "add_scalars");
  if (rg && active_tape() != nullptr) {
    out->requires_grad = true;
    auto kept = terms;
    auto ck = coeffs;
    active_tape()->record(out, [kept, ck, out]() {
      for (std::size_t k = 0; k < kept.size(); ++k) {
        if (!kept[k]->requires_grad) continue;
        kept[k]->ensure_grad();
        kept[k]->g[0] += ck[k] * out->g[0];
      }
    });
  }
  return out;
}

}  // namespace seqvc

#endif  // SEQVC_TENSOR_HPP_
