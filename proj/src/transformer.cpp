#include "tokflow/transformer.hpp"

#include <cmath>

#include "tokflow/errors.hpp"

namespace tokflow {

namespace {
constexpr double kLnEps = 1e-6;

Tensor linear_init(size_t in, size_t out, RngStream& rng) {
  // Xavier-style scale.
  double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  return param_randn({in, out}, rng, stddev);
}
}  // namespace

void BlockParams::collect(const std::string& prefix,
                          std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".wq", wq);
  out.emplace_back(prefix + ".bq", bq);
  out.emplace_back(prefix + ".wk", wk);
  out.emplace_back(prefix + ".bk", bk);
  out.emplace_back(prefix + ".wv", wv);
  out.emplace_back(prefix + ".bv", bv);
  out.emplace_back(prefix + ".wo", wo);
  out.emplace_back(prefix + ".bo", bo);
  out.emplace_back(prefix + ".w_gate", w_gate);
  out.emplace_back(prefix + ".b_gate", b_gate);
  out.emplace_back(prefix + ".w_val", w_val);
  out.emplace_back(prefix + ".b_val", b_val);
  out.emplace_back(prefix + ".w_down", w_down);
  out.emplace_back(prefix + ".b_down", b_down);
  out.emplace_back(prefix + ".ln1_g", ln1_g);
  out.emplace_back(prefix + ".ln1_b", ln1_b);
  out.emplace_back(prefix + ".ln2_g", ln2_g);
  out.emplace_back(prefix + ".ln2_b", ln2_b);
  if (mod_w) {
    out.emplace_back(prefix + ".mod_w", mod_w);
    out.emplace_back(prefix + ".mod_b", mod_b);
  }
}

BlockParams make_block(size_t model_dim, size_t heads, RngStream& rng, bool with_adaln) {
  if (heads == 0 || model_dim % heads != 0)
    throw ConfigError("block: head count must divide model dim");
  BlockParams p;
  p.model_dim = model_dim;
  p.heads = heads;
  p.ffn_hidden = swiglu_hidden(model_dim);
  p.wq = linear_init(model_dim, model_dim, rng);
  p.bq = param_zeros({1, model_dim});
  p.wk = linear_init(model_dim, model_dim, rng);
  p.bk = param_zeros({1, model_dim});
  p.wv = linear_init(model_dim, model_dim, rng);
  p.bv = param_zeros({1, model_dim});
  p.wo = linear_init(model_dim, model_dim, rng);
  p.bo = param_zeros({1, model_dim});
  p.w_gate = linear_init(model_dim, p.ffn_hidden, rng);
  p.b_gate = param_zeros({1, p.ffn_hidden});
  p.w_val = linear_init(model_dim, p.ffn_hidden, rng);
  p.b_val = param_zeros({1, p.ffn_hidden});
  p.w_down = linear_init(p.ffn_hidden, model_dim, rng);
  p.b_down = param_zeros({1, model_dim});
  p.ln1_g = param({1, model_dim}, std::vector<double>(model_dim, 1.0));
  p.ln1_b = param_zeros({1, model_dim});
  p.ln2_g = param({1, model_dim}, std::vector<double>(model_dim, 1.0));
  p.ln2_b = param_zeros({1, model_dim});
  if (with_adaln) {
    p.mod_w = param_zeros({model_dim, 6 * model_dim});
    p.mod_b = param_zeros({1, 6 * model_dim});
  }
  return p;
}

Tensor attention(const BlockParams& p, const Tensor& x, size_t B, size_t S) {
  size_t D = p.model_dim;
  if (x->cols() != D || x->rows() != B * S)
    throw DimError("attention: input shape does not match B*S x model_dim");
  if (D % p.heads != 0) throw ConfigError("attention: head count must divide model dim");
  size_t hd = D / p.heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = add_rowvec(mm(x, p.wq), p.bq);
  Tensor k = add_rowvec(mm(x, p.wk), p.bk);
  Tensor v = add_rowvec(mm(x, p.wv), p.bv);

  std::vector<Tensor> seq_out;
  seq_out.reserve(B);
  for (size_t b = 0; b < B; ++b) {
    Tensor qb = row_slice(q, b * S, (b + 1) * S);
    Tensor kb = row_slice(k, b * S, (b + 1) * S);
    Tensor vb = row_slice(v, b * S, (b + 1) * S);
    std::vector<Tensor> heads_out;
    heads_out.reserve(p.heads);
    for (size_t h = 0; h < p.heads; ++h) {
      Tensor qh = col_slice(qb, h * hd, (h + 1) * hd);
      Tensor kh = col_slice(kb, h * hd, (h + 1) * hd);
      Tensor vh = col_slice(vb, h * hd, (h + 1) * hd);
      Tensor scores = scale(mm_nt(qh, kh), inv_sqrt);
      Tensor attn = softmax_rows(scores);
      heads_out.push_back(mm(attn, vh));
    }
    seq_out.push_back(concat_cols(heads_out));
  }
  Tensor merged = B == 1 ? seq_out[0] : concat_rows(seq_out);
  return add_rowvec(mm(merged, p.wo), p.bo);
}

Tensor swiglu(const BlockParams& p, const Tensor& x) {
  Tensor g = silu(add_rowvec(mm(x, p.w_gate), p.b_gate));
  Tensor v = add_rowvec(mm(x, p.w_val), p.b_val);
  return add_rowvec(mm(mul(g, v), p.w_down), p.b_down);
}

Tensor block_forward(const BlockParams& p, const Tensor& x, size_t B, size_t S) {
  Tensor h = add(x, attention(p, layer_norm(x, p.ln1_g, p.ln1_b, kLnEps), B, S));
  return add(h, swiglu(p, layer_norm(h, p.ln2_g, p.ln2_b, kLnEps)));
}

Tensor adaln_block_forward(const BlockParams& p, const Tensor& x, const Tensor& cond,
                           size_t B, size_t S) {
  if (!p.mod_w) throw ConfigError("adaln_block: block built without conditioning");
  size_t D = p.model_dim;
  if (cond->rows() != B || cond->cols() != D)
    throw DimError("adaln_block: conditioning shape must be [B, model_dim]");

  Tensor mod = add_rowvec(mm(silu(cond), p.mod_w), p.mod_b);  // [B, 6D]
  Tensor shift_a = col_slice(mod, 0, D);
  Tensor scale_a = col_slice(mod, D, 2 * D);
  Tensor gate_a = col_slice(mod, 2 * D, 3 * D);
  Tensor shift_f = col_slice(mod, 3 * D, 4 * D);
  Tensor scale_f = col_slice(mod, 4 * D, 5 * D);
  Tensor gate_f = col_slice(mod, 5 * D, 6 * D);

  auto modulate = [&](const Tensor& h, const Tensor& sc, const Tensor& sh) {
    return add(mul(h, expand_rows(add_scalar(sc, 1.0), S)), expand_rows(sh, S));
  };

  Tensor h = layer_norm(x, p.ln1_g, p.ln1_b, kLnEps);
  h = attention(p, modulate(h, scale_a, shift_a), B, S);
  Tensor y = add(x, mul(h, expand_rows(gate_a, S)));

  Tensor f = layer_norm(y, p.ln2_g, p.ln2_b, kLnEps);
  f = swiglu(p, modulate(f, scale_f, shift_f));
  return add(y, mul(f, expand_rows(gate_f, S)));
}

RegisterBank make_register_bank(size_t count, size_t model_dim, RngStream& rng,
                                double stddev) {
  RegisterBank b;
  b.count = count;
  b.embeddings = count > 0 ? param_randn({count, model_dim}, rng, stddev)
                           : param_zeros({0, model_dim});
  return b;
}

Tensor concat_registers(const Tensor& patches, const RegisterBank& bank, size_t B,
                        size_t P) {
  if (patches->rows() != B * P)
    throw DimError("concat_registers: patch rows do not match B*P");
  if (bank.count > 0 && bank.embeddings->cols() != patches->cols())
    throw DimError("concat_registers: register dim does not match patch dim");
  if (bank.count == 0) return patches;
  std::vector<Tensor> parts;
  parts.reserve(2 * B);
  for (size_t b = 0; b < B; ++b) {
    parts.push_back(bank.embeddings);
    parts.push_back(row_slice(patches, b * P, (b + 1) * P));
  }
  return concat_rows(parts);
}

Tensor extract_registers(const Tensor& x, size_t B, size_t S, size_t T) {
  if (x->rows() != B * S) throw DimError("extract_registers: rows do not match B*S");
  if (T > S) throw DimError("extract_registers: T exceeds sequence length");
  if (B == 1) return row_slice(x, 0, T);
  std::vector<Tensor> parts;
  parts.reserve(B);
  for (size_t b = 0; b < B; ++b) parts.push_back(row_slice(x, b * S, b * S + T));
  return concat_rows(parts);
}

Tensor timestep_features(const std::vector<double>& t) {
  constexpr size_t kHalf = kTimestepFeatureDim / 2;
  std::vector<double> v(t.size() * kTimestepFeatureDim);
  for (size_t i = 0; i < t.size(); ++i) {
    for (size_t k = 0; k < kHalf; ++k) {
      double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                             static_cast<double>(kHalf));
      double a = t[i] * freq;
      v[i * kTimestepFeatureDim + k] = std::cos(a);
      v[i * kTimestepFeatureDim + kHalf + k] = std::sin(a);
    }
  }
  return constant({t.size(), kTimestepFeatureDim}, std::move(v));
}

void ConditioningParams::collect(const std::string& prefix,
                                 std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + ".t_w1", t_w1);
  out.emplace_back(prefix + ".t_b1", t_b1);
  out.emplace_back(prefix + ".t_w2", t_w2);
  out.emplace_back(prefix + ".t_b2", t_b2);
  out.emplace_back(prefix + ".class_table", class_table);
}

ConditioningParams make_conditioning(size_t model_dim, size_t num_classes,
                                     RngStream& rng) {
  ConditioningParams p;
  p.model_dim = model_dim;
  p.num_classes = num_classes;
  p.t_w1 = linear_init(kTimestepFeatureDim, model_dim, rng);
  p.t_b1 = param_zeros({1, model_dim});
  p.t_w2 = linear_init(model_dim, model_dim, rng);
  p.t_b2 = param_zeros({1, model_dim});
  p.class_table = param_randn({num_classes + 1, model_dim}, rng, 0.02);
  return p;
}

Tensor conditioning_vector(const ConditioningParams& p, const std::vector<double>& t,
                           const std::vector<size_t>& labels) {
  if (t.size() != labels.size())
    throw DimError("conditioning_vector: t and label counts differ");
  Tensor tf = timestep_features(t);
  Tensor te = add_rowvec(mm(silu(add_rowvec(mm(tf, p.t_w1), p.t_b1)), p.t_w2), p.t_b2);
  std::vector<size_t> rows(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    size_t l = labels[i];
    if (l == kNullClass)
      rows[i] = p.num_classes;
    else if (l >= p.num_classes)
      throw ContractError("conditioning_vector: class id out of range");
    else
      rows[i] = l;
  }
  return add(te, gather_rows(p.class_table, rows));
}

}  // namespace tokflow
