// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nn/tensor.h"

namespace twopass {
namespace nn {

double logaddexp(double a, double b);
double logsumexp_row(const double* x, int n);

// All row-wise ops treat a 2-D tensor as a batch of row vectors.
Tensor log_softmax(const Tensor& logits);
Tensor softmax_rows(const Tensor& logits);
Tensor sigmoid_t(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor add_rowwise(const Tensor& m, const Tensor& bias);  // bias is {1, n}
Tensor colsum(const Tensor& m);                           // result {1, n}
Tensor elem_mul(const Tensor& a, const Tensor& b);
Tensor elem_add(const Tensor& a, const Tensor& b);
Tensor elem_sub(const Tensor& a, const Tensor& b);
void append_rows(Tensor& dst, const Tensor& src);
Tensor concat_cols_pair(const Tensor& a, const Tensor& b);  // same row count

// Post-activation gate values kept around for the backward pass.
struct LstmCellScratch {
  Tensor i, f, g, o, tc, h_full;
};

// One projected-LSTM cell update shared by inference and the training tape.
// Gate order in wx/wh/b is [input, forget, cell, output]. Returns the
// projected hidden state (batch x proj); writes the new cell state to c_out.
Tensor lstm_cell_forward(const Tensor& wx, const Tensor& wh, const Tensor& b,
                         const Tensor& wp, const Tensor& x, const Tensor& h_prev,
                         const Tensor& c_prev, Tensor* c_out, LstmCellScratch* scratch);

}  // namespace nn
}  // namespace twopass
