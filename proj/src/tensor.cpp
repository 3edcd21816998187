#include "tokflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace tokflow {

namespace {

thread_local bool g_tape = true;
thread_local bool g_count = false;
thread_local long long g_madds = 0;

size_t numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor make_node(std::vector<size_t> shape, std::vector<double> v) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(v);
  if (numel(n->shape) != n->val.size())
    throw DimError("tensor data length does not match shape");
  return n;
}

bool want_grad(std::initializer_list<const Tensor*> parents) {
  if (!g_tape) return false;
  for (const Tensor* p : parents)
    if ((*p)->requires_grad) return true;
  return false;
}

void attach(const Tensor& out, std::initializer_list<Tensor> parents,
            std::function<void()> backfn) {
  out->requires_grad = true;
  out->parents.assign(parents.begin(), parents.end());
  out->backfn = std::move(backfn);
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a->shape != b->shape)
    throw DimError(std::string(op) + ": operand shapes differ");
}

}  // namespace

NoGrad::NoGrad() : prev(g_tape) { g_tape = false; }
NoGrad::~NoGrad() { g_tape = prev; }
bool tape_enabled() { return g_tape; }

void madd_counter_reset() { g_madds = 0; }
long long madd_counter() { return g_madds; }
void madd_counter_arm(bool on) { g_count = on; }

void mm_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N) {
  if (g_count) g_madds += static_cast<long long>(M) * K * N;
  for (size_t i = 0; i < M; ++i) {
    const double* ai = a + i * K;
    double* ci = c + i * N;
    for (size_t k = 0; k < K; ++k) {
      double aik = ai[k];
      const double* bk = b + k * N;
      for (size_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
    }
  }
}

void mm_nt_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N) {
  if (g_count) g_madds += static_cast<long long>(M) * K * N;
  for (size_t i = 0; i < M; ++i) {
    const double* ai = a + i * K;
    double* ci = c + i * N;
    for (size_t j = 0; j < N; ++j) {
      const double* bj = b + j * K;
      double s = 0.0;
      for (size_t k = 0; k < K; ++k) s += ai[k] * bj[k];
      ci[j] += s;
    }
  }
}

void mm_tn_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N) {
  if (g_count) g_madds += static_cast<long long>(M) * K * N;
  for (size_t m = 0; m < M; ++m) {
    const double* am = a + m * K;
    const double* bm = b + m * N;
    for (size_t k = 0; k < K; ++k) {
      double amk = am[k];
      double* ck = c + k * N;
      for (size_t j = 0; j < N; ++j) ck[j] += amk * bm[j];
    }
  }
}

Tensor constant(std::vector<size_t> shape, std::vector<double> v) {
  return make_node(std::move(shape), std::move(v));
}

Tensor constant_like(const Tensor& t, std::vector<double> v) {
  return make_node(t->shape, std::move(v));
}

Tensor full(std::vector<size_t> shape, double x) {
  size_t n = numel(shape);
  return make_node(std::move(shape), std::vector<double>(n, x));
}

Tensor zeros(std::vector<size_t> shape) { return full(std::move(shape), 0.0); }

Tensor param(std::vector<size_t> shape, std::vector<double> v) {
  Tensor t = make_node(std::move(shape), std::move(v));
  t->requires_grad = true;
  return t;
}

Tensor param_zeros(std::vector<size_t> shape) {
  Tensor t = zeros(std::move(shape));
  t->requires_grad = true;
  return t;
}

Tensor param_randn(std::vector<size_t> shape, RngStream& rng, double stddev) {
  size_t n = numel(shape);
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = rng.normal() * stddev;
  Tensor t = make_node(std::move(shape), std::move(v));
  t->requires_grad = true;
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a->val[i] + b->val[i];
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a, &b})) {
    Node* o = out.get();
    attach(out, {a, b}, [o, a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a->val[i] - b->val[i];
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a, &b})) {
    Node* o = out.get();
    attach(out, {a, b}, [o, a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a->val[i] * b->val[i];
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a, &b})) {
    Node* o = out.get();
    attach(out, {a, b}, [o, a, b] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->val[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->val[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a->val[i] * s;
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a, s] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a->val[i] + s;
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
    });
  }
  return out;
}

Tensor exp_op(const Tensor& a) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a->val[i]);
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * o->val[i];
    });
  }
  return out;
}

Tensor sin_op(const Tensor& a) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::sin(a->val[i]);
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i)
        a->grad[i] += o->grad[i] * std::cos(a->val[i]);
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& a) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a->val[i]);
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i)
        a->grad[i] += o->grad[i] * (1.0 - o->val[i] * o->val[i]);
    });
  }
  return out;
}

Tensor silu(const Tensor& a) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-a->val[i]));
    v[i] = a->val[i] * s;
  }
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-a->val[i]));
        a->grad[i] += o->grad[i] * s * (1.0 + a->val[i] * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor clamp_op(const Tensor& a, double lo, double hi) {
  std::vector<double> v(a->size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::min(hi, std::max(lo, a->val[i]));
  Tensor out = make_node(a->shape, std::move(v));
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a, lo, hi] {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i)
        if (a->val[i] >= lo && a->val[i] <= hi) a->grad[i] += o->grad[i];
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a->val) s += x;
  Tensor out = make_node({1}, {s});
  if (want_grad({&a})) {
    Node* o = out.get();
    attach(out, {a}, [o, a] {
      a->ensure_grad();
      double g = o->grad[0];
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  if (a->size() == 0) throw DimError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a->size()));
}

Tensor mm(const Tensor& a, const Tensor& b) {
  size_t M = a->rows(), K = a->cols(), K2 = b->rows(), N = b->cols();
  if (K != K2) throw DimError("mm: inner dimensions disagree");
  std::vector<double> v(M * N, 0.0);
  mm_acc(a->val.data(), b->val.data(), v.data(), M, K, N);
  Tensor out = make_node({M, N}, std::move(v));
  if (want_grad({&a, &b})) {
    Node* o = out.get();
    attach(out, {a, b}, [o, a, b, M, K, N] {
      if (a->requires_grad) {
        a->ensure_grad();
        mm_nt_acc(o->grad.data(), b->val.data(), a->grad.data(), M, N, K);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        mm_tn_acc(a->val.data(), o->grad.data(), b->grad.data(), M, K, N);
      }
    });
  }
  return out;
}

Tensor mm_nt(const Tensor& a, const Tensor& b) {
  size_t M = a->rows(), K = a->cols(), N = b->rows();
  if (b->cols() != K) throw DimError("mm_nt: inner dimensions disagree");
  std::vector<double> v(M * N, 0.0);
  mm_nt_acc(a->val.data(), b->val.data(), v.data(), M, K, N);
  Tensor out = make_node({M, N}, std::move(v));
  if (want_grad({&a, &b})) {
    Node* o = out.get();
    attach(out, {a, b}, [o, a, b, M, K, N] {
      // C = A B^T : dA += dC B ; dB += dC^T A
      if (a->requires_grad) {
        a->ensure_grad();
        mm_acc(o->grad.data(), b->val.data(), a->grad.data(), M, N, K);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        mm_tn_acc(o->grad.data(), a->val.data(), b->grad.data(), M, N, K);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  size_t R = x->rows(), C = x->cols();
  if (C < 1) throw DimError("softmax: empty last dimension");
  std::vector<double> v(x->size());
  for (size_t r = 0; r < R; ++r) {
    const double* xi = x->val.data() + r * C;
    double m = xi[0];
    for (size_t c = 1; c < C; ++c) m = std::max(m, xi[c]);
    double s = 0.0;
    for (size_t c = 0; c < C; ++c) {
      v[r * C + c] = std::exp(xi[c] - m);
      s += v[r * C + c];
    }
    for (size_t c = 0; c < C; ++c) v[r * C + c] /= s;
  }
  Tensor out = make_node(x->shape, std::move(v));
  if (want_grad({&x})) {
    Node* o = out.get();
    attach(out, {x}, [o, x, R, C] {
      x->ensure_grad();
      for (size_t r = 0; r < R; ++r) {
        const double* y = o->val.data() + r * C;
        const double* dy = o->grad.data() + r * C;
        double dot = 0.0;
        for (size_t c = 0; c < C; ++c) dot += y[c] * dy[c];
        double* dx = x->grad.data() + r * C;
        for (size_t c = 0; c < C; ++c) dx[c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  size_t R = x->rows(), C = x->cols();
  if (C < 1) throw DimError("layer_norm: empty last dimension");
  if (gain->size() != C || bias->size() != C)
    throw DimError("layer_norm: gain/bias do not match last dimension");
  std::vector<double> v(x->size());
  std::vector<double> inv_std(R), means(R);
  for (size_t r = 0; r < R; ++r) {
    const double* xi = x->val.data() + r * C;
    double mu = 0.0;
    for (size_t c = 0; c < C; ++c) mu += xi[c];
    mu /= C;
    double var = 0.0;
    for (size_t c = 0; c < C; ++c) var += (xi[c] - mu) * (xi[c] - mu);
    var /= C;
    double is = 1.0 / std::sqrt(var + eps);
    means[r] = mu;
    inv_std[r] = is;
    for (size_t c = 0; c < C; ++c)
      v[r * C + c] = gain->val[c] * (xi[c] - mu) * is + bias->val[c];
  }
  Tensor out = make_node(x->shape, std::move(v));
  if (want_grad({&x, &gain, &bias})) {
    Node* o = out.get();
    auto ms = std::make_shared<std::vector<double>>(std::move(means));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
    attach(out, {x, gain, bias}, [o, x, gain, bias, ms, is, R, C] {
      for (size_t r = 0; r < R; ++r) {
        const double* xi = x->val.data() + r * C;
        const double* dy = o->grad.data() + r * C;
        double mu = (*ms)[r], s = (*is)[r];
        if (gain->requires_grad) {
          gain->ensure_grad();
          for (size_t c = 0; c < C; ++c)
            gain->grad[c] += dy[c] * (xi[c] - mu) * s;
        }
        if (bias->requires_grad) {
          bias->ensure_grad();
          for (size_t c = 0; c < C; ++c) bias->grad[c] += dy[c];
        }
        if (x->requires_grad) {
          x->ensure_grad();
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (size_t c = 0; c < C; ++c) {
            double xhat = (xi[c] - mu) * s;
            double dxhat = dy[c] * gain->val[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          double* dx = x->grad.data() + r * C;
          for (size_t c = 0; c < C; ++c) {
            double xhat = (xi[c] - mu) * s;
            double dxhat = dy[c] * gain->val[c];
            dx[c] += s * (dxhat - sum_dxhat / C - xhat * sum_dxhat_xhat / C);
          }
        }
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  size_t R = x->rows(), C = x->cols();
  if (v->size() != C) throw DimError("add_rowvec: vector does not match last dimension");
  std::vector<double> out_v(x->size());
  for (size_t r = 0; r < R; ++r)
    for (size_t c = 0; c < C; ++c) out_v[r * C + c] = x->val[r * C + c] + v->val[c];
  Tensor out = make_node(x->shape, std::move(out_v));
  if (want_grad({&x, &v})) {
    Node* o = out.get();
    attach(out, {x, v}, [o, x, v, R, C] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (size_t r = 0; r < R; ++r)
          for (size_t c = 0; c < C; ++c) v->grad[c] += o->grad[r * C + c];
      }
    });
  }
  return out;
}

Tensor row_slice(const Tensor& x, size_t r0, size_t r1) {
  size_t R = x->rows(), C = x->cols();
  if (r0 > r1 || r1 > R) throw DimError("row_slice: range out of bounds");
  std::vector<double> v(x->val.begin() + r0 * C, x->val.begin() + r1 * C);
  Tensor out = make_node({r1 - r0, C}, std::move(v));
  if (want_grad({&x})) {
    Node* o = out.get();
    attach(out, {x}, [o, x, r0, C] {
      x->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) x->grad[r0 * C + i] += o->grad[i];
    });
  }
  return out;
}

Tensor col_slice(const Tensor& x, size_t c0, size_t c1) {
  size_t R = x->rows(), C = x->cols();
  if (c0 > c1 || c1 > C) throw DimError("col_slice: range out of bounds");
  size_t W = c1 - c0;
  std::vector<double> v(R * W);
  for (size_t r = 0; r < R; ++r)
    for (size_t c = 0; c < W; ++c) v[r * W + c] = x->val[r * C + c0 + c];
  Tensor out = make_node({R, W}, std::move(v));
  if (want_grad({&x})) {
    Node* o = out.get();
    attach(out, {x}, [o, x, c0, C, W, R] {
      x->ensure_grad();
      for (size_t r = 0; r < R; ++r)
        for (size_t c = 0; c < W; ++c) x->grad[r * C + c0 + c] += o->grad[r * W + c];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimError("concat_rows: no parts");
  size_t C = parts[0]->cols(), R = 0;
  for (const Tensor& p : parts) {
    if (p->cols() != C) throw DimError("concat_rows: column mismatch");
    R += p->rows();
  }
  std::vector<double> v;
  v.reserve(R * C);
  for (const Tensor& p : parts) v.insert(v.end(), p->val.begin(), p->val.end());
  Tensor out = make_node({R, C}, std::move(v));
  bool need = false;
  if (g_tape)
    for (const Tensor& p : parts)
      if (p->requires_grad) need = true;
  if (need) {
    Node* o = out.get();
    auto ps = std::make_shared<std::vector<Tensor>>(parts);
    out->requires_grad = true;
    out->parents = parts;
    out->backfn = [o, ps] {
      size_t off = 0;
      for (const Tensor& p : *ps) {
        size_t n = p->size();
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t i = 0; i < n; ++i) p->grad[i] += o->grad[off + i];
        }
        off += n;
      }
    };
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimError("concat_cols: no parts");
  size_t R = parts[0]->rows(), C = 0;
  for (const Tensor& p : parts) {
    if (p->rows() != R) throw DimError("concat_cols: row mismatch");
    C += p->cols();
  }
  std::vector<double> v(R * C);
  size_t off = 0;
  for (const Tensor& p : parts) {
    size_t pc = p->cols();
    for (size_t r = 0; r < R; ++r)
      for (size_t c = 0; c < pc; ++c) v[r * C + off + c] = p->val[r * pc + c];
    off += pc;
  }
  Tensor out = make_node({R, C}, std::move(v));
  bool need = false;
  if (g_tape)
    for (const Tensor& p : parts)
      if (p->requires_grad) need = true;
  if (need) {
    Node* o = out.get();
    auto ps = std::make_shared<std::vector<Tensor>>(parts);
    out->requires_grad = true;
    out->parents = parts;
    out->backfn = [o, ps, R, C] {
      size_t off2 = 0;
      for (const Tensor& p : *ps) {
        size_t pc = p->cols();
        if (p->requires_grad) {
          p->ensure_grad();
          for (size_t r = 0; r < R; ++r)
            for (size_t c = 0; c < pc; ++c)
              p->grad[r * pc + c] += o->grad[r * C + off2 + c];
        }
        off2 += pc;
      }
    };
  }
  return out;
}

Tensor tile_rows(const Tensor& x, size_t times) {
  size_t R = x->rows(), C = x->cols();
  std::vector<double> v;
  v.reserve(times * R * C);
  for (size_t t = 0; t < times; ++t) v.insert(v.end(), x->val.begin(), x->val.end());
  Tensor out = make_node({times * R, C}, std::move(v));
  if (want_grad({&x})) {
    Node* o = out.get();
    attach(out, {x}, [o, x, times] {
      x->ensure_grad();
      size_t n = x->size();
      for (size_t t = 0; t < times; ++t)
        for (size_t i = 0; i < n; ++i) x->grad[i] += o->grad[t * n + i];
    });
  }
  return out;
}

Tensor expand_rows(const Tensor& x, size_t times) {
  size_t R = x->rows(), C = x->cols();
  std::vector<double> v(R * times * C);
  for (size_t r = 0; r < R; ++r)
    for (size_t t = 0; t < times; ++t)
      std::copy(x->val.begin() + r * C, x->val.begin() + (r + 1) * C,
                v.begin() + (r * times + t) * C);
  Tensor out = make_node({R * times, C}, std::move(v));
  if (want_grad({&x})) {
    Node* o = out.get();
    attach(out, {x}, [o, x, times, R, C] {
      x->ensure_grad();
      for (size_t r = 0; r < R; ++r)
        for (size_t t = 0; t < times; ++t)
          for (size_t c = 0; c < C; ++c)
            x->grad[r * C + c] += o->grad[(r * times + t) * C + c];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<size_t>& idx) {
  size_t R = table->rows(), C = table->cols();
  std::vector<double> v(idx.size() * C);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= R) throw ContractError("gather_rows: index out of range");
    std::copy(table->val.begin() + idx[i] * C, table->val.begin() + (idx[i] + 1) * C,
              v.begin() + i * C);
  }
  Tensor out = make_node({idx.size(), C}, std::move(v));
  if (want_grad({&table})) {
    Node* o = out.get();
    auto ix = std::make_shared<std::vector<size_t>>(idx);
    attach(out, {table}, [o, table, ix, C] {
      table->ensure_grad();
      for (size_t i = 0; i < ix->size(); ++i)
        for (size_t c = 0; c < C; ++c)
          table->grad[(*ix)[i] * C + c] += o->grad[i * C + c];
    });
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss->size() != 1) throw ContractError("backward: loss must be scalar");
  // Topological order by DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.get(), 0});
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backfn) (*it)->backfn();
}

void check_finite(const Tensor& t, const char* what) {
  for (double x : t->val)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

double grad_check(const std::function<Tensor()>& make_loss,
                  const std::vector<Tensor>& points, double h) {
  for (const Tensor& p : points) p->zero_grad();
  Tensor loss = make_loss();
  if (!std::isfinite(loss->val[0])) throw NumericError("grad_check: non-finite loss");
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : points) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }
  double worst = 0.0;
  for (size_t pi = 0; pi < points.size(); ++pi) {
    Tensor p = points[pi];
    for (size_t i = 0; i < p->size(); ++i) {
      double orig = p->val[i];
      double fp, fm;
      {
        NoGrad ng;
        p->val[i] = orig + h;
        fp = make_loss()->val[0];
        p->val[i] = orig - h;
        fm = make_loss()->val[0];
        p->val[i] = orig;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite perturbed loss");
      double fd = (fp - fm) / (2.0 * h);
      double a = analytic[pi][i];
      double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace tokflow
