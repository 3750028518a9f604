#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "../parallel.hpp"
#include "layers.hpp"
#include "vrepair/kernels.hpp"
#include "vrepair/micronet.hpp"

namespace vrepair::micronet {

using detail::AttentionCache;
using detail::FeedForwardCache;
using detail::LayerNormCache;

void ModelConfig::validate() const {
  if (num_layers <= 0 || num_heads <= 0 || model_dim <= 0 || ff_dim <= 0 || max_positions <= 0) {
    throw std::invalid_argument("model config: sizes must be positive");
  }
  if (model_dim % num_heads != 0) throw std::invalid_argument("model config: model_dim % num_heads != 0");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout outside [0, 1)");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("model config: label_smoothing outside [0, 1)");
  }
}

double StepDistribution::total() const {
  double s = 0.0;
  for (double p : generate) s += gate * p;
  for (double p : copy) s += (1.0 - gate) * p;
  return s;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

LayerNormWeights make_ln(std::size_t d) { return {Matrix(1, d), Matrix(1, d)}; }

AttentionWeights make_attn(std::size_t d) {
  return {Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d),
          Matrix(1, d), Matrix(1, d), Matrix(1, d), Matrix(1, d)};
}

FeedForwardWeights make_ff(std::size_t d, std::size_t f) { return {Matrix(d, f), Matrix(1, f), Matrix(f, d), Matrix(1, d)}; }

std::vector<Matrix*> tensors(Parameters& p) {
  std::vector<Matrix*> out;
  p.visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> tensors(const Parameters& p) {
  std::vector<const Matrix*> out;
  p.visit([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Parameters Parameters::zeros(const ModelConfig& config, std::size_t vocab_size) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.model_dim);
  const auto f = static_cast<std::size_t>(config.ff_dim);
  Parameters p;
  p.token_embedding = Matrix(vocab_size, d);
  p.position_embedding = Matrix(static_cast<std::size_t>(config.max_positions), d);
  for (int l = 0; l < config.num_layers; ++l) {
    p.encoder.push_back({make_ln(d), make_attn(d), make_ln(d), make_ff(d, f)});
    p.decoder.push_back({make_ln(d), make_attn(d), make_ln(d), make_attn(d), make_ln(d), make_ff(d, f)});
  }
  p.encoder_norm = make_ln(d);
  p.decoder_norm = make_ln(d);
  p.output_weight = Matrix(d, vocab_size);
  p.output_bias = Matrix(1, vocab_size);
  p.gate_weight = Matrix(d, 1);
  p.gate_bias = Matrix(1, 1);
  return p;
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) {
    for (double v : m.values()) ok = ok && std::isfinite(v);
  });
  return ok;
}

void Parameters::set_zero() {
  visit([](const std::string&, Matrix& m) { m.set_zero(); });
}

void Parameters::scale(double factor) {
  visit([factor](const std::string&, Matrix& m) {
    for (double& v : m.values()) v *= factor;
  });
}

Parameters& Parameters::operator+=(const Parameters& other) {
  auto mine = tensors(*this);
  auto theirs = tensors(other);
  if (mine.size() != theirs.size()) throw std::invalid_argument("parameter layout mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i] += *theirs[i];
  return *this;
}

ModelState init_model(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  ModelState s{config, vocab, Parameters::zeros(config, vocab.size()), 0};
  std::mt19937_64 rng(seed);
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
  s.params.visit([&](const std::string& name, Matrix& m) {
    if (ends_with(name, ".gain")) {
      m.fill(1.0);
    } else if (ends_with(name, "embedding")) {
      std::normal_distribution<double> dist(0.0, emb_std);
      for (double& v : m.values()) v = dist(rng);
    } else if (m.rows() == 1) {
      m.set_zero();
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : m.values()) v = dist(rng);
    }
  });
  return s;
}

// ---------------------------------------------------------------------------
// Data

Example make_example(const Lexemes& input, const Lexemes& target, const Vocabulary& vocab) {
  Example ex;
  ex.src_lexemes = input;
  for (const auto& w : input) ex.src_ids.push_back(vocab.id_or_unk(w));
  ex.tgt_lexemes = target;
  ex.tgt_lexemes.push_back(vocab.lexeme(Vocabulary::kEos));
  for (const auto& w : target) ex.tgt_ids.push_back(vocab.id_or_unk(w));
  ex.tgt_ids.push_back(Vocabulary::kEos);
  return ex;
}

Batch make_batch(const std::vector<Example>& examples) {
  Batch b;
  std::size_t max_src = 0, max_tgt = 0;
  for (const auto& e : examples) {
    max_src = std::max(max_src, e.src_ids.size());
    max_tgt = std::max(max_tgt, e.tgt_ids.size());
  }
  const std::string pad = Vocabulary::reserved()[Vocabulary::kPad];
  for (const auto& e : examples) {
    auto ids = e.src_ids;
    auto lex = e.src_lexemes;
    std::vector<char> mask(ids.size(), 1);
    ids.resize(max_src, Vocabulary::kPad);
    lex.resize(max_src, pad);
    mask.resize(max_src, 0);
    b.input_ids.push_back(std::move(ids));
    b.input_lexemes.push_back(std::move(lex));
    b.input_mask.push_back(std::move(mask));

    auto tids = e.tgt_ids;
    auto tlex = e.tgt_lexemes;
    std::vector<char> tmask(tids.size(), 1);
    tids.resize(max_tgt, Vocabulary::kPad);
    tlex.resize(max_tgt, pad);
    tmask.resize(max_tgt, 0);
    b.target_ids.push_back(std::move(tids));
    b.target_lexemes.push_back(std::move(tlex));
    b.target_mask.push_back(std::move(tmask));
  }
  return b;
}

Example Batch::example(std::size_t i) const {
  Example e;
  for (std::size_t j = 0; j < input_ids[i].size(); ++j) {
    if (!input_mask[i][j]) continue;
    e.src_ids.push_back(input_ids[i][j]);
    e.src_lexemes.push_back(input_lexemes[i][j]);
  }
  for (std::size_t j = 0; j < target_ids[i].size(); ++j) {
    if (!target_mask[i][j]) continue;
    e.tgt_ids.push_back(target_ids[i][j]);
    e.tgt_lexemes.push_back(target_lexemes[i][j]);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Graph for one unpadded example

namespace {

struct EncoderLayerCache {
  LayerNormCache ln_attn;
  AttentionCache attn;
  Matrix drop_attn;
  LayerNormCache ln_ff;
  FeedForwardCache ff;
  Matrix drop_ff;
};

struct DecoderLayerCache {
  LayerNormCache ln_self;
  AttentionCache self_attn;
  Matrix drop_self;
  LayerNormCache ln_cross;
  AttentionCache cross_attn;
  Matrix drop_cross;
  LayerNormCache ln_ff;
  FeedForwardCache ff;
  Matrix drop_ff;
};

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

Matrix embed(const Parameters& p, const std::vector<int>& ids) {
  const std::size_t d = p.token_embedding.cols();
  if (ids.size() > p.position_embedding.rows()) throw std::length_error("sequence longer than max_positions");
  Matrix x(ids.size(), d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    if (id >= p.token_embedding.rows()) throw std::out_of_range("token id outside the vocabulary");
    for (std::size_t c = 0; c < d; ++c) x(t, c) = p.token_embedding(id, c) + p.position_embedding(t, c);
  }
  return x;
}

void embed_backward(const Matrix& dx, const std::vector<int>& ids, Parameters& g) {
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    for (std::size_t c = 0; c < dx.cols(); ++c) {
      g.token_embedding(id, c) += dx(t, c);
      g.position_embedding(t, c) += dx(t, c);
    }
  }
}

Matrix masked(const Matrix& x, const Matrix& mask) {
  Matrix y = x;
  detail::apply_mask(y, mask);
  return y;
}

class ExampleGraph {
 public:
  ExampleGraph(const ModelState& state, std::mt19937_64* rng) : state_(state), rng_(rng) {}

  void run(const std::vector<int>& src, const std::vector<int>& dec_in) {
    if (src.empty()) throw std::invalid_argument("empty model input");
    src_ = src;
    dec_in_ = dec_in;
    const auto& p = state_.params;
    const int heads = state_.config.num_heads;
    const double drop = rng_ ? state_.config.dropout : 0.0;

    Matrix x = embed(p, src_);
    enc_drop_ = detail::dropout_mask(x.rows(), x.cols(), drop, rng_);
    detail::apply_mask(x, enc_drop_);
    enc_.assign(p.encoder.size(), {});
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
      const auto& w = p.encoder[l];
      auto& c = enc_[l];
      Matrix h = detail::layer_norm_forward(x, w.norm_attn, &c.ln_attn);
      Matrix a = detail::attention_forward(h, h, w.attn, heads, nullptr, &c.attn);
      c.drop_attn = detail::dropout_mask(a.rows(), a.cols(), drop, rng_);
      detail::apply_mask(a, c.drop_attn);
      x += a;
      h = detail::layer_norm_forward(x, w.norm_ff, &c.ln_ff);
      Matrix f = detail::ff_forward(h, w.ff, &c.ff);
      c.drop_ff = detail::dropout_mask(f.rows(), f.cols(), drop, rng_);
      detail::apply_mask(f, c.drop_ff);
      x += f;
    }
    memory_ = detail::layer_norm_forward(x, p.encoder_norm, &enc_norm_);

    Matrix y = embed(p, dec_in_);
    dec_drop_ = detail::dropout_mask(y.rows(), y.cols(), drop, rng_);
    detail::apply_mask(y, dec_drop_);
    const Matrix causal = causal_mask(y.rows());
    dec_.assign(p.decoder.size(), {});
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
      const auto& w = p.decoder[l];
      auto& c = dec_[l];
      Matrix h = detail::layer_norm_forward(y, w.norm_self, &c.ln_self);
      Matrix a = detail::attention_forward(h, h, w.self_attn, heads, &causal, &c.self_attn);
      c.drop_self = detail::dropout_mask(a.rows(), a.cols(), drop, rng_);
      detail::apply_mask(a, c.drop_self);
      y += a;
      h = detail::layer_norm_forward(y, w.norm_cross, &c.ln_cross);
      a = detail::attention_forward(h, memory_, w.cross_attn, heads, nullptr, &c.cross_attn);
      c.drop_cross = detail::dropout_mask(a.rows(), a.cols(), drop, rng_);
      detail::apply_mask(a, c.drop_cross);
      y += a;
      h = detail::layer_norm_forward(y, w.norm_ff, &c.ln_ff);
      Matrix f = detail::ff_forward(h, w.ff, &c.ff);
      c.drop_ff = detail::dropout_mask(f.rows(), f.cols(), drop, rng_);
      detail::apply_mask(f, c.drop_ff);
      y += f;
    }
    out_ = detail::layer_norm_forward(y, p.decoder_norm, &dec_norm_);

    log_probs_ = detail::linear_forward(out_, p.output_weight, p.output_bias);
    probs_ = log_probs_;
    kernels::softmax_rows(probs_);
    for (std::size_t t = 0; t < log_probs_.rows(); ++t) {
      auto row = log_probs_.row(t);
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : row) mx = std::max(mx, v);
      double s = 0.0;
      for (double v : row) s += std::exp(v - mx);
      const double lse = mx + std::log(s);
      for (double& v : row) v -= lse;
    }
    gate_logit_ = detail::linear_forward(out_, p.gate_weight, p.gate_bias);

    const auto& last = dec_.back().cross_attn.probs;
    copy_ = Matrix(dec_in_.size(), src_.size());
    for (const auto& ph : last) copy_ += ph;
    const double inv_h = 1.0 / static_cast<double>(last.size());
    for (double& v : copy_.values()) v *= inv_h;
  }

  std::vector<StepDistribution> distributions(std::optional<double> gate_override) const {
    std::vector<StepDistribution> out(dec_in_.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
      const auto g = probs_.row(t);
      const auto a = copy_.row(t);
      out[t].generate.assign(g.begin(), g.end());
      out[t].copy.assign(a.begin(), a.end());
      out[t].gate = gate_override ? *gate_override : sigmoid(gate_logit_(t, 0));
    }
    return out;
  }

  /// Summed cross entropy against the smoothed copy-aware targets for
  /// gold outputs `ex`; keeps the targets for backward().
  double cross_entropy(const Example& ex) {
    const auto& vocab = state_.vocab;
    const std::size_t T = ex.tgt_ids.size();
    const std::size_t V = vocab.size();
    const std::size_t S = ex.src_lexemes.size();
    const double eps = state_.config.label_smoothing;
    const double base = eps / static_cast<double>(V + S);
    qv_ = Matrix(T, V, base);
    qs_ = Matrix(T, S, base);
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const std::string& w = ex.tgt_lexemes[t];
      const int vid = vocab.find(w);
      std::vector<std::size_t> matches;
      for (std::size_t j = 0; j < S; ++j) {
        if (ex.src_lexemes[j] == w) matches.push_back(j);
      }
      const double mass = 1.0 - eps;
      double to_vocab = 0.0;
      if (vid >= 0) to_vocab = matches.empty() ? mass : 0.5 * mass;
      const double to_copy = matches.empty() ? 0.0 : mass - to_vocab;
      if (vid >= 0) {
        qv_(t, static_cast<std::size_t>(vid)) += to_vocab;
      } else if (matches.empty()) {
        qv_(t, Vocabulary::kUnk) += mass;
      }
      for (std::size_t j : matches) qs_(t, j) += to_copy / static_cast<double>(matches.size());

      const double z = gate_logit_(t, 0);
      const double log_g = log_sigmoid(z);
      const double log_1mg = log_sigmoid(-z);
      double ce = 0.0;
      for (std::size_t v = 0; v < V; ++v) ce -= qv_(t, v) * (log_g + log_probs_(t, v));
      for (std::size_t j = 0; j < S; ++j) ce -= qs_(t, j) * (log_1mg + std::log(copy_(t, j)));
      total += ce;
    }
    return total;
  }

  void backward(double scale, Gradients& g) const {
    const auto& p = state_.params;
    const int heads = state_.config.num_heads;
    const std::size_t T = qv_.rows();
    const std::size_t V = qv_.cols();
    const std::size_t S = qs_.cols();

    Matrix dlogits(T, V), dz(T, 1), dcopy(T, S);
    for (std::size_t t = 0; t < T; ++t) {
      double Qv = 0.0, Qs = 0.0;
      for (std::size_t v = 0; v < V; ++v) Qv += qv_(t, v);
      for (std::size_t j = 0; j < S; ++j) Qs += qs_(t, j);
      for (std::size_t v = 0; v < V; ++v) dlogits(t, v) = (probs_(t, v) * Qv - qv_(t, v)) * scale;
      const double gt = sigmoid(gate_logit_(t, 0));
      dz(t, 0) = (-Qv * (1.0 - gt) + Qs * gt) * scale;
      for (std::size_t j = 0; j < S; ++j) {
        dcopy(t, j) = -qs_(t, j) / (static_cast<double>(heads) * copy_(t, j)) * scale;
      }
    }

    Matrix dout = detail::linear_backward(dlogits, out_, p.output_weight, g.output_weight, g.output_bias);
    dout += detail::linear_backward(dz, out_, p.gate_weight, g.gate_weight, g.gate_bias);
    Matrix dy = detail::layer_norm_backward(dout, p.decoder_norm, dec_norm_, g.decoder_norm);

    Matrix dmemory(memory_.rows(), memory_.cols());
    Matrix dq, dkv;
    for (std::size_t l = p.decoder.size(); l-- > 0;) {
      const auto& w = p.decoder[l];
      auto& gw = g.decoder[l];
      const auto& c = dec_[l];

      Matrix dh = detail::ff_backward(masked(dy, c.drop_ff), w.ff, c.ff, gw.ff);
      dy += detail::layer_norm_backward(dh, w.norm_ff, c.ln_ff, gw.norm_ff);

      const Matrix* extra = (l + 1 == p.decoder.size()) ? &dcopy : nullptr;
      detail::attention_backward(masked(dy, c.drop_cross), w.cross_attn, heads, c.cross_attn, extra, gw.cross_attn,
                                 dq, dkv);
      dmemory += dkv;
      dy += detail::layer_norm_backward(dq, w.norm_cross, c.ln_cross, gw.norm_cross);

      detail::attention_backward(masked(dy, c.drop_self), w.self_attn, heads, c.self_attn, nullptr, gw.self_attn, dq,
                                 dkv);
      dq += dkv;
      dy += detail::layer_norm_backward(dq, w.norm_self, c.ln_self, gw.norm_self);
    }
    detail::apply_mask(dy, dec_drop_);
    embed_backward(dy, dec_in_, g);

    Matrix dx = detail::layer_norm_backward(dmemory, p.encoder_norm, enc_norm_, g.encoder_norm);
    for (std::size_t l = p.encoder.size(); l-- > 0;) {
      const auto& w = p.encoder[l];
      auto& gw = g.encoder[l];
      const auto& c = enc_[l];

      Matrix dh = detail::ff_backward(masked(dx, c.drop_ff), w.ff, c.ff, gw.ff);
      dx += detail::layer_norm_backward(dh, w.norm_ff, c.ln_ff, gw.norm_ff);

      detail::attention_backward(masked(dx, c.drop_attn), w.attn, heads, c.attn, nullptr, gw.attn, dq, dkv);
      dq += dkv;
      dx += detail::layer_norm_backward(dq, w.norm_attn, c.ln_attn, gw.norm_attn);
    }
    detail::apply_mask(dx, enc_drop_);
    embed_backward(dx, src_, g);
  }

 private:
  const ModelState& state_;
  std::mt19937_64* rng_;
  std::vector<int> src_, dec_in_;
  Matrix enc_drop_, dec_drop_;
  std::vector<EncoderLayerCache> enc_;
  std::vector<DecoderLayerCache> dec_;
  LayerNormCache enc_norm_, dec_norm_;
  Matrix memory_, out_;
  Matrix log_probs_, probs_, gate_logit_, copy_;
  Matrix qv_, qs_;
};

std::vector<int> decoder_inputs(const Example& ex) {
  std::vector<int> in{Vocabulary::kBos};
  in.insert(in.end(), ex.tgt_ids.begin(), ex.tgt_ids.end() - 1);
  return in;
}

std::mt19937_64 dropout_rng(std::uint64_t seed, std::int64_t step, std::size_t index) {
  const auto s = static_cast<std::uint64_t>(step);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

std::size_t total_positions(const Batch& batch) {
  std::size_t n = 0;
  for (const auto& m : batch.target_mask) {
    for (char c : m) n += c ? 1 : 0;
  }
  return n;
}

/// Summed cross entropy for example `i`; adds scale·∇ into `grads` when given.
double run_example(const ModelState& state, const Batch& batch, std::size_t i, const LossOptions& options,
                   double scale, Gradients* grads) {
  const Example ex = batch.example(i);
  if (ex.tgt_ids.empty()) return 0.0;
  std::mt19937_64 rng = dropout_rng(options.dropout_seed, state.step, i);
  ExampleGraph graph(state, options.training ? &rng : nullptr);
  graph.run(ex.src_ids, decoder_inputs(ex));
  const double ce = graph.cross_entropy(ex);
  if (grads) graph.backward(scale, *grads);
  return ce;
}

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite loss");
}

// Examples per parallel wave; each keeps its own gradient buffer.
constexpr std::size_t kWave = 8;

}  // namespace

std::vector<StepDistribution> forward(const ModelState& state, const Lexemes& input, const Lexemes& target_prefix,
                                      const ForwardOptions& options) {
  std::vector<int> src, dec{Vocabulary::kBos};
  for (const auto& w : input) src.push_back(state.vocab.id_or_unk(w));
  for (const auto& w : target_prefix) dec.push_back(state.vocab.id_or_unk(w));
  ExampleGraph graph(state, nullptr);
  graph.run(src, dec);
  return graph.distributions(options.gate_override);
}

LossResult loss(const ModelState& state, const Batch& batch, const LossOptions& options) {
  const std::size_t n = total_positions(batch);
  std::vector<double> per(batch.size(), 0.0);
  vrepair::detail::parallel_for(batch.size(), [&](std::size_t i) { per[i] = run_example(state, batch, i, options, 0.0, nullptr); });
  double sum = 0.0;
  for (double v : per) sum += v;
  LossResult r{n ? sum / static_cast<double>(n) : 0.0, n};
  check_finite(r.loss);
  return r;
}

LossResult loss_and_grad(const ModelState& state, const Batch& batch, Gradients& grads, const LossOptions& options) {
  const std::size_t n = total_positions(batch);
  grads = Parameters::zeros(state.config, state.vocab.size());
  if (n == 0) return {};
  const double scale = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t begin = 0; begin < batch.size(); begin += kWave) {
    const std::size_t end = std::min(batch.size(), begin + kWave);
    std::vector<Gradients> local(end - begin);
    std::vector<double> per(end - begin, 0.0);
    vrepair::detail::parallel_for(end - begin, [&](std::size_t k) {
      local[k] = Parameters::zeros(state.config, state.vocab.size());
      per[k] = run_example(state, batch, begin + k, options, scale, &local[k]);
    });
    for (std::size_t k = 0; k < local.size(); ++k) {
      grads += local[k];
      sum += per[k];
    }
  }
  LossResult r{sum * scale, n};
  check_finite(r.loss);
  return r;
}

LossResult loss_and_grad_serial(const ModelState& state, const Batch& batch, Gradients& grads,
                                const LossOptions& options) {
  const std::size_t n = total_positions(batch);
  grads = Parameters::zeros(state.config, state.vocab.size());
  if (n == 0) return {};
  const double scale = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) sum += run_example(state, batch, i, options, scale, &grads);
  LossResult r{sum * scale, n};
  check_finite(r.loss);
  return r;
}

// ---------------------------------------------------------------------------
// Copy-aware decoding helpers

ExtendedVocab::ExtendedVocab(const Vocabulary& vocab, const Lexemes& source) : vocab_(&vocab) {
  std::unordered_map<std::string, std::size_t> oov_ids;
  for (const auto& w : source) {
    const int id = vocab.find(w);
    if (id >= 0) {
      source_ids_.push_back(static_cast<std::size_t>(id));
      continue;
    }
    auto [it, fresh] = oov_ids.emplace(w, vocab.size() + oov_.size());
    if (fresh) oov_.push_back(w);
    source_ids_.push_back(it->second);
  }
}

const std::string& ExtendedVocab::lexeme(std::size_t id) const {
  if (id < vocab_->size()) return vocab_->lexeme(static_cast<int>(id));
  return oov_.at(id - vocab_->size());
}

int ExtendedVocab::input_id(std::size_t id) const {
  return id < vocab_->size() ? static_cast<int>(id) : Vocabulary::kUnk;
}

std::vector<double> ExtendedVocab::fold(const StepDistribution& step) const {
  std::vector<double> out(size(), 0.0);
  for (std::size_t v = 0; v < step.generate.size(); ++v) out[v] = step.vocab_prob(v);
  for (std::size_t j = 0; j < step.copy.size(); ++j) out[source_ids_[j]] += step.position_prob(j);
  return out;
}

IncrementalDecoder::IncrementalDecoder(const ModelState& state, const Lexemes& input)
    : state_(&state), extended_(state.vocab, input) {
  std::vector<int> src;
  for (const auto& w : input) src.push_back(state.vocab.id_or_unk(w));
  if (src.empty()) throw std::invalid_argument("empty model input");
  const auto& p = state.params;
  const int heads = state.config.num_heads;
  Matrix x = embed(p, src);
  for (const auto& w : p.encoder) {
    Matrix h = detail::layer_norm_forward(x, w.norm_attn, nullptr);
    x += detail::attention_forward(h, h, w.attn, heads, nullptr, nullptr);
    h = detail::layer_norm_forward(x, w.norm_ff, nullptr);
    x += detail::ff_forward(h, w.ff, nullptr);
  }
  const Matrix memory = detail::layer_norm_forward(x, p.encoder_norm, nullptr);
  for (const auto& w : p.decoder) {
    cross_keys_.push_back(detail::linear_forward(memory, w.cross_attn.wk, w.cross_attn.bk));
    cross_values_.push_back(detail::linear_forward(memory, w.cross_attn.wv, w.cross_attn.bv));
  }
}

IncrementalDecoder::Cache IncrementalDecoder::start() const {
  Cache c;
  const auto d = static_cast<std::size_t>(state_->config.model_dim);
  c.keys.assign(state_->params.decoder.size(), Matrix(0, d));
  c.values.assign(state_->params.decoder.size(), Matrix(0, d));
  return c;
}

namespace {

Matrix append_row(const Matrix& m, const Matrix& row) {
  Matrix out(m.rows() + 1, m.cols());
  std::copy(m.values().begin(), m.values().end(), out.values().begin());
  std::copy(row.values().begin(), row.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(m.size()));
  return out;
}

}  // namespace

StepDistribution IncrementalDecoder::step(Cache& cache, int token) const {
  const auto& p = state_->params;
  const int heads = state_->config.num_heads;
  const std::size_t dk = static_cast<std::size_t>(state_->config.head_dim());
  const std::size_t pos = cache.length;
  if (pos >= p.position_embedding.rows()) throw std::length_error("decoder ran past max_positions");
  if (token < 0 || static_cast<std::size_t>(token) >= p.token_embedding.rows()) {
    throw std::out_of_range("token id outside the vocabulary");
  }

  const std::size_t d = p.token_embedding.cols();
  Matrix x(1, d);
  for (std::size_t c = 0; c < d; ++c) {
    x(0, c) = p.token_embedding(static_cast<std::size_t>(token), c) + p.position_embedding(pos, c);
  }

  Matrix copy(1, cross_keys_.empty() ? 0 : cross_keys_.front().rows());
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& w = p.decoder[l];
    Matrix h = detail::layer_norm_forward(x, w.norm_self, nullptr);
    const Matrix q = detail::linear_forward(h, w.self_attn.wq, w.self_attn.bq);
    cache.keys[l] = append_row(cache.keys[l], detail::linear_forward(h, w.self_attn.wk, w.self_attn.bk));
    cache.values[l] = append_row(cache.values[l], detail::linear_forward(h, w.self_attn.wv, w.self_attn.bv));
    Matrix concat(1, d);
    for (int hd = 0; hd < heads; ++hd) {
      const std::size_t c0 = static_cast<std::size_t>(hd) * dk;
      detail::add_cols(concat,
                       attention(detail::slice_cols(q, c0, dk), detail::slice_cols(cache.keys[l], c0, dk),
                                 detail::slice_cols(cache.values[l], c0, dk)),
                       c0);
    }
    x += detail::linear_forward(concat, w.self_attn.wo, w.self_attn.bo);

    h = detail::layer_norm_forward(x, w.norm_cross, nullptr);
    const Matrix cq = detail::linear_forward(h, w.cross_attn.wq, w.cross_attn.bq);
    concat.set_zero();
    const bool last = l + 1 == p.decoder.size();
    for (int hd = 0; hd < heads; ++hd) {
      const std::size_t c0 = static_cast<std::size_t>(hd) * dk;
      Matrix probs;
      detail::add_cols(concat,
                       attention(detail::slice_cols(cq, c0, dk), detail::slice_cols(cross_keys_[l], c0, dk),
                                 detail::slice_cols(cross_values_[l], c0, dk), nullptr, &probs),
                       c0);
      if (last) copy += probs;
    }
    x += detail::linear_forward(concat, w.cross_attn.wo, w.cross_attn.bo);

    h = detail::layer_norm_forward(x, w.norm_ff, nullptr);
    x += detail::ff_forward(h, w.ff, nullptr);
  }
  ++cache.length;

  const Matrix out = detail::layer_norm_forward(x, p.decoder_norm, nullptr);
  Matrix logits = detail::linear_forward(out, p.output_weight, p.output_bias);
  kernels::softmax_rows(logits);
  const Matrix z = detail::linear_forward(out, p.gate_weight, p.gate_bias);

  StepDistribution s;
  s.generate = logits.values();
  s.copy = copy.values();
  for (double& v : s.copy) v /= static_cast<double>(heads);
  s.gate = sigmoid(z(0, 0));
  return s;
}

}  // namespace vrepair::micronet
