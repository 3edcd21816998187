#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "tokflow/errors.hpp"
#include "tokflow/rng.hpp"

namespace tokflow {

class Node;
using Tensor = std::shared_ptr<Node>;

// Dense double tensor that doubles as a node of a dynamic autodiff tape.
// Ops treat the tensor as a [rows, cols] matrix where cols is the last
// dimension and rows is everything else flattened (row-major storage).
class Node {
 public:
  std::vector<size_t> shape;
  std::vector<double> val;
  std::vector<double> grad;  // sized lazily, same length as val
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void()> backfn;

  size_t size() const { return val.size(); }
  size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
  void zero_grad() { grad.assign(val.size(), 0.0); }
};

// Scoped guard disabling tape recording (evaluation-only forward passes).
struct NoGrad {
  NoGrad();
  ~NoGrad();
  bool prev;
};

bool tape_enabled();

// Multiply-add instrumentation for the cost-model cross-check. When armed,
// every matmul kernel adds M*K*N to the counter.
void madd_counter_reset();
long long madd_counter();
void madd_counter_arm(bool on);

// ---- constructors ----
Tensor constant(std::vector<size_t> shape, std::vector<double> v);
Tensor constant_like(const Tensor& t, std::vector<double> v);
Tensor full(std::vector<size_t> shape, double x);
Tensor zeros(std::vector<size_t> shape);
Tensor param(std::vector<size_t> shape, std::vector<double> v);
Tensor param_zeros(std::vector<size_t> shape);
Tensor param_randn(std::vector<size_t> shape, RngStream& rng, double stddev);

// ---- elementwise / reduction ops (all register gradients when needed) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp_op(const Tensor& a);
Tensor sin_op(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor clamp_op(const Tensor& a, double lo, double hi);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- matrix ops ----
Tensor mm(const Tensor& a, const Tensor& b);     // [M,K]x[K,N]
Tensor mm_nt(const Tensor& a, const Tensor& b);  // [M,K]x[N,K]^T -> [M,N]
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// ---- shape ops ----
Tensor row_slice(const Tensor& x, size_t r0, size_t r1);
Tensor col_slice(const Tensor& x, size_t c0, size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor tile_rows(const Tensor& x, size_t times);    // [S,D] -> [times*S,D]
Tensor expand_rows(const Tensor& x, size_t times);  // [B,D] -> [B*times,D], rows repeated
Tensor gather_rows(const Tensor& table, const std::vector<size_t>& idx);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable requires_grad tensor; repeated calls without zeroing accumulate.
void backward(const Tensor& loss);

void check_finite(const Tensor& t, const char* what);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `make_loss` must rebuild the graph from the current values of `points`.
double grad_check(const std::function<Tensor()>& make_loss,
                  const std::vector<Tensor>& points, double h);

// Raw kernels (shared with analysis code that works outside the tape).
void mm_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N);
void mm_nt_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N);
void mm_tn_acc(const double* a, const double* b, double* c, size_t M, size_t K, size_t N);

}  // namespace tokflow
