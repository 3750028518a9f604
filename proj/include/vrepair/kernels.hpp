#pragma once

#include "vrepair/tensor.hpp"

// Dense products used by the model. Each kernel writes c = op(a)·op(b), or adds
// to c when `accumulate` is set. The top-level versions parallelise over
// output rows with OpenMP; kernels::reference keeps the plain serial triple
// loops the tests compare against.
namespace vrepair::kernels {

/// c = a · b
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c = aᵀ · b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
/// c = a · bᵀ
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

/// Row-wise softmax in place; entries equal to -inf get probability 0.
void softmax_rows(Matrix& m);

namespace reference {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
void softmax_rows(Matrix& m);
}  // namespace reference

}  // namespace vrepair::kernels
