// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nn/param.h"
#include "nn/tensor.h"
#include "util/rng.h"

namespace twopass {
namespace nn {

// Multi-head scaled dot-product attention. Projections are packed with all
// heads stacked along the output dimension; per-head context vectors are
// concatenated and passed through the output projection, so the context width
// is out_dim (= num_heads * head_dim by default).
struct AttentionParams {
  int num_heads = 0;
  int query_dim = 0;
  int source_dim = 0;
  int head_dim = 0;
  int out_dim = 0;
  Parameter wq;  // {heads*head_dim, query_dim}
  Parameter wk;  // {heads*head_dim, source_dim}
  Parameter wv;  // {heads*head_dim, source_dim}
  Parameter wo;  // {out_dim, heads*head_dim}

  void init(const std::string& prefix, int heads, int qdim, int sdim, int hdim, Rng& rng);
  std::vector<Parameter*> params();
};

// Projects source rows into per-head key/value matrices, appending to any rows
// already present so a stream can grow the source incrementally.
void project_attention_source(const AttentionParams& p, const Tensor& keys,
                              const Tensor& values, std::vector<Tensor>* k_heads,
                              std::vector<Tensor>* v_heads);

// query {batch, query_dim} against pre-projected keys/values; returns the
// output-projected concatenation of per-head contexts {batch, out_dim}.
Tensor multi_head_attention_cached(const AttentionParams& p, const Tensor& query,
                                   const std::vector<Tensor>& k_heads,
                                   const std::vector<Tensor>& v_heads);

// Same, but projecting raw source rows {S, source_dim} on the fly.
Tensor multi_head_attention(const AttentionParams& p, const Tensor& query,
                            const Tensor& keys, const Tensor& values);

}  // namespace nn
}  // namespace twopass
