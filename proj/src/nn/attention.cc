// SPDX-License-Identifier: Apache-2.0

#include "nn/attention.h"

#include <cmath>

#include "nn/ops.h"
#include "util/common.h"

namespace twopass {
namespace nn {

void AttentionParams::init(const std::string& prefix, int heads, int qdim, int sdim,
                           int hdim, Rng& rng) {
  check(heads > 0 && qdim > 0 && sdim > 0 && hdim > 0, "attention dims must be positive");
  num_heads = heads;
  query_dim = qdim;
  source_dim = sdim;
  head_dim = hdim;
  out_dim = heads * hdim;
  wq = Parameter(prefix + ".wq", uniform_init({heads * hdim, qdim}, qdim, rng));
  wk = Parameter(prefix + ".wk", uniform_init({heads * hdim, sdim}, sdim, rng));
  wv = Parameter(prefix + ".wv", uniform_init({heads * hdim, sdim}, sdim, rng));
  wo = Parameter(prefix + ".wo", uniform_init({out_dim, heads * hdim}, heads * hdim, rng));
}

std::vector<Parameter*> AttentionParams::params() { return {&wq, &wk, &wv, &wo}; }

namespace {

// Splits the packed {rows, heads*head_dim} projection into per-head blocks.
void split_heads(const Tensor& packed, int heads, int hdim, std::vector<Tensor>* out) {
  int rows = packed.rows();
  if (out->empty()) out->assign(heads, Tensor());
  for (int h = 0; h < heads; ++h) {
    Tensor block({rows, hdim});
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < hdim; ++j) block.at(r, j) = packed.at(r, h * hdim + j);
    append_rows((*out)[h], block);
  }
}

}  // namespace

void project_attention_source(const AttentionParams& p, const Tensor& keys,
                              const Tensor& values, std::vector<Tensor>* k_heads,
                              std::vector<Tensor>* v_heads) {
  check(keys.ndim() == 2 && keys.cols() == p.source_dim, "attention key dim mismatch");
  check(values.ndim() == 2 && values.cols() == p.source_dim, "attention value dim mismatch");
  check(keys.rows() == values.rows(), "attention key/value length mismatch");
  split_heads(matmul(keys, p.wk.value, false, true), p.num_heads, p.head_dim, k_heads);
  split_heads(matmul(values, p.wv.value, false, true), p.num_heads, p.head_dim, v_heads);
}

Tensor multi_head_attention_cached(const AttentionParams& p, const Tensor& query,
                                   const std::vector<Tensor>& k_heads,
                                   const std::vector<Tensor>& v_heads) {
  check(static_cast<int>(k_heads.size()) == p.num_heads &&
            static_cast<int>(v_heads.size()) == p.num_heads,
        "attention head count mismatch");
  check(query.ndim() == 2 && query.cols() == p.query_dim, "attention query dim mismatch");
  int batch = query.rows();
  Tensor q = matmul(query, p.wq.value, false, true);
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  Tensor ctx_cat({batch, p.num_heads * p.head_dim});
  for (int h = 0; h < p.num_heads; ++h) {
    check(k_heads[h].rows() == v_heads[h].rows(), "attention source length mismatch");
    check(k_heads[h].rows() > 0, "attention source is empty");
    Tensor qh({batch, p.head_dim});
    for (int r = 0; r < batch; ++r)
      for (int j = 0; j < p.head_dim; ++j) qh.at(r, j) = q.at(r, h * p.head_dim + j);
    Tensor scores = matmul(qh, k_heads[h], false, true);
    for (double& v : scores.data) v *= inv_scale;
    Tensor attn = softmax_rows(scores);
    Tensor ctx = matmul(attn, v_heads[h]);
    for (int r = 0; r < batch; ++r)
      for (int j = 0; j < p.head_dim; ++j) ctx_cat.at(r, h * p.head_dim + j) = ctx.at(r, j);
  }
  return matmul(ctx_cat, p.wo.value, false, true);
}

Tensor multi_head_attention(const AttentionParams& p, const Tensor& query,
                            const Tensor& keys, const Tensor& values) {
  check(keys.rows() >= 1, "attention source is empty");
  std::vector<Tensor> k_heads, v_heads;
  project_attention_source(p, keys, values, &k_heads, &v_heads);
  return multi_head_attention_cached(p, query, k_heads, v_heads);
}

}  // namespace nn
}  // namespace twopass
