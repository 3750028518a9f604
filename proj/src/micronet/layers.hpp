#pragma once

// Building blocks shared by the training graph and the incremental decoder.
// Each *_forward optionally fills a cache that the matching *_backward reads.

#include <cstdint>
#include <random>
#include <vector>

#include "vrepair/micronet.hpp"

namespace vrepair::micronet::detail {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormWeights& w, LayerNormCache* cache);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormWeights& w, const LayerNormCache& cache,
                           LayerNormWeights& grad);

/// x·w + b, with b broadcast over rows.
Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& b);
/// Accumulates dw, db; returns dx.
Matrix linear_backward(const Matrix& dy, const Matrix& x, const Matrix& w, Matrix& dw, Matrix& db);

struct AttentionCache {
  Matrix xq, xkv;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, rows(xq) × rows(xkv)
  Matrix concat;
};

Matrix attention_forward(const Matrix& xq, const Matrix& xkv, const AttentionWeights& w, int heads,
                         const Matrix* mask, AttentionCache* cache);

/// `extra_dprobs` (optional) is added to the gradient of every head's
/// attention weights; the copy pathway enters the network this way.
void attention_backward(const Matrix& dout, const AttentionWeights& w, int heads, const AttentionCache& cache,
                        const Matrix* extra_dprobs, AttentionWeights& grad, Matrix& dxq, Matrix& dxkv);

struct FeedForwardCache {
  Matrix x, pre, hidden;
};

Matrix ff_forward(const Matrix& x, const FeedForwardWeights& w, FeedForwardCache* cache);
Matrix ff_backward(const Matrix& dy, const FeedForwardWeights& w, const FeedForwardCache& cache,
                   FeedForwardWeights& grad);

/// Inverted dropout; an empty mask means identity.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64* rng);
void apply_mask(Matrix& x, const Matrix& mask);

Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t width);
void add_cols(Matrix& dst, const Matrix& src, std::size_t c0);

}  // namespace vrepair::micronet::detail
