#include "layers.hpp"

#include <cmath>
#include <limits>

#include "vrepair/kernels.hpp"

namespace vrepair::micronet {

Matrix causal_mask(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) m(i, j) = -std::numeric_limits<double>::infinity();
  }
  return m;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* mask, Matrix* probs) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0) {
    throw std::invalid_argument("attention: non-conforming q/k/v shapes");
  }
  if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows())) {
    throw std::invalid_argument("attention: mask shape mismatch");
  }
  Matrix scores;
  kernels::matmul_nt(q, k, scores);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] *= scale;
  if (mask) scores += *mask;
  kernels::softmax_rows(scores);
  Matrix out;
  kernels::matmul(scores, v, out);
  if (probs) *probs = std::move(scores);
  return out;
}

namespace detail {

Matrix layer_norm_forward(const Matrix& x, const LayerNormWeights& w, LayerNormCache* cache) {
  const std::size_t n = x.cols();
  Matrix y(x.rows(), n);
  if (cache) {
    cache->xhat = Matrix(x.rows(), n);
    cache->inv_std.assign(x.rows(), 0.0);
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      const double xh = (row[c] - mean) * inv;
      y(r, c) = xh * w.gain[c] + w.bias[c];
      if (cache) cache->xhat(r, c) = xh;
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormWeights& w, const LayerNormCache& cache,
                           LayerNormWeights& grad) {
  const std::size_t n = dy.cols();
  Matrix dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double g = dy(r, c);
      grad.gain[c] += g * cache.xhat(r, c);
      grad.bias[c] += g;
      dxhat[c] = g * w.gain[c];
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * cache.xhat(r, c);
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = cache.inv_std[r] * (dxhat[c] - mean_d - cache.xhat(r, c) * mean_dx);
    }
  }
  return dx;
}

Matrix linear_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y;
  kernels::matmul(x, w, y);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

Matrix linear_backward(const Matrix& dy, const Matrix& x, const Matrix& w, Matrix& dw, Matrix& db) {
  kernels::matmul_tn(x, dy, dw, true);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto row = dy.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
  }
  Matrix dx;
  kernels::matmul_nt(dy, w, dx);
  return dx;
}

Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, c0 + c);
  }
  return out;
}

void add_cols(Matrix& dst, const Matrix& src, std::size_t c0) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    for (std::size_t c = 0; c < src.cols(); ++c) dst(r, c0 + c) += src(r, c);
  }
}

Matrix attention_forward(const Matrix& xq, const Matrix& xkv, const AttentionWeights& w, int heads,
                         const Matrix* mask, AttentionCache* cache) {
  Matrix q = linear_forward(xq, w.wq, w.bq);
  Matrix k = linear_forward(xkv, w.wk, w.bk);
  Matrix v = linear_forward(xkv, w.wv, w.bv);
  const std::size_t dk = q.cols() / static_cast<std::size_t>(heads);
  Matrix concat(xq.rows(), q.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dk;
    Matrix o = attention(slice_cols(q, c0, dk), slice_cols(k, c0, dk), slice_cols(v, c0, dk), mask,
                         &probs[static_cast<std::size_t>(h)]);
    add_cols(concat, o, c0);
  }
  Matrix out = linear_forward(concat, w.wo, w.bo);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->concat = std::move(concat);
  }
  return out;
}

void attention_backward(const Matrix& dout, const AttentionWeights& w, int heads, const AttentionCache& cache,
                        const Matrix* extra_dprobs, AttentionWeights& grad, Matrix& dxq, Matrix& dxkv) {
  const Matrix dconcat = linear_backward(dout, cache.concat, w.wo, grad.wo, grad.bo);
  const std::size_t d = cache.q.cols();
  const std::size_t dk = d / static_cast<std::size_t>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Matrix dq(cache.q.rows(), d), dk_all(cache.k.rows(), d), dv(cache.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h) * dk;
    const Matrix& p = cache.probs[static_cast<std::size_t>(h)];
    const Matrix qh = slice_cols(cache.q, c0, dk);
    const Matrix kh = slice_cols(cache.k, c0, dk);
    const Matrix vh = slice_cols(cache.v, c0, dk);
    const Matrix doh = slice_cols(dconcat, c0, dk);

    Matrix dp;
    kernels::matmul_nt(doh, vh, dp);
    if (extra_dprobs) dp += *extra_dprobs;
    Matrix dvh;
    kernels::matmul_tn(p, doh, dvh);

    // softmax backward, then the 1/sqrt(dk) scaling
    Matrix ds(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) dot += dp(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) ds(r, c) = p(r, c) * (dp(r, c) - dot) * scale;
    }
    Matrix dqh, dkh;
    kernels::matmul(ds, kh, dqh);
    kernels::matmul_tn(ds, qh, dkh);
    add_cols(dq, dqh, c0);
    add_cols(dk_all, dkh, c0);
    add_cols(dv, dvh, c0);
  }
  dxq = linear_backward(dq, cache.xq, w.wq, grad.wq, grad.bq);
  dxkv = linear_backward(dk_all, cache.xkv, w.wk, grad.wk, grad.bk);
  dxkv += linear_backward(dv, cache.xkv, w.wv, grad.wv, grad.bv);
}

Matrix ff_forward(const Matrix& x, const FeedForwardWeights& w, FeedForwardCache* cache) {
  Matrix pre = linear_forward(x, w.w1, w.b1);
  Matrix hidden = pre;
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = hidden[i] > 0.0 ? hidden[i] : 0.0;
  Matrix out = linear_forward(hidden, w.w2, w.b2);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

Matrix ff_backward(const Matrix& dy, const FeedForwardWeights& w, const FeedForwardCache& cache,
                   FeedForwardWeights& grad) {
  Matrix dh = linear_backward(dy, cache.hidden, w.w2, grad.w2, grad.b2);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (cache.pre[i] <= 0.0) dh[i] = 0.0;
  }
  return linear_backward(dh, cache.x, w.w1, grad.w1, grad.b1);
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64* rng) {
  if (!rng || p <= 0.0) return {};
  Matrix m(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = keep(*rng) ? scale : 0.0;
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

}  // namespace detail
}  // namespace vrepair::micronet
