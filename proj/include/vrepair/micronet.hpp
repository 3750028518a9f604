#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrepair/ctok.hpp"
#include "vrepair/encoding.hpp"
#include "vrepair/tensor.hpp"

// A small Transformer encoder-decoder with a copy pathway, differentiated by
// hand. Pre-norm residual blocks, learned positions shared by both stacks,
// one token embedding shared by encoder and decoder inputs. Everything is in
// double precision so finite differences can check the gradients tightly.
namespace vrepair::micronet {

using encoding::Vocabulary;

struct ModelConfig {
  int num_layers = 2;
  int num_heads = 4;
  int model_dim = 64;
  int ff_dim = 128;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int max_positions = 1024;

  int head_dim() const { return model_dim / num_heads; }
  /// Throws std::invalid_argument on non-positive sizes or d % heads != 0.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormWeights {
  Matrix gain, bias;  // 1×d
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d×d
  Matrix bq, bk, bv, bo;  // 1×d
};

struct FeedForwardWeights {
  Matrix w1, b1;  // d×ff, 1×ff
  Matrix w2, b2;  // ff×d, 1×d
};

struct EncoderLayerWeights {
  LayerNormWeights norm_attn;
  AttentionWeights attn;
  LayerNormWeights norm_ff;
  FeedForwardWeights ff;
};

struct DecoderLayerWeights {
  LayerNormWeights norm_self;
  AttentionWeights self_attn;
  LayerNormWeights norm_cross;
  AttentionWeights cross_attn;
  LayerNormWeights norm_ff;
  FeedForwardWeights ff;
};

/// Every trainable tensor. Gradients and Adam moments reuse this layout.
struct Parameters {
  Matrix token_embedding;     // V×d
  Matrix position_embedding;  // P×d
  std::vector<EncoderLayerWeights> encoder;
  LayerNormWeights encoder_norm;
  std::vector<DecoderLayerWeights> decoder;
  LayerNormWeights decoder_norm;
  Matrix output_weight;  // d×V
  Matrix output_bias;    // 1×V
  Matrix gate_weight;    // d×1
  Matrix gate_bias;      // 1×1

  /// All tensors zero, shaped for `config` and a vocabulary of `vocab_size`.
  static Parameters zeros(const ModelConfig& config, std::size_t vocab_size);

  /// Calls f(name, matrix) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f);
  template <class F>
  void visit(F&& f) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  void set_zero();
  void scale(double factor);
  Parameters& operator+=(const Parameters& other);
};

using Gradients = Parameters;

struct ModelState {
  ModelConfig config;
  Vocabulary vocab;
  Parameters params;
  std::int64_t step = 0;
};

/// Xavier-uniform projections, N(0, 1/sqrt(d)) embeddings, unit norm gains.
ModelState init_model(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Data

/// One training pair resolved against a vocabulary. The decoder reads
/// <s> + target and must produce target + </s>.
struct Example {
  std::vector<int> src_ids;
  Lexemes src_lexemes;
  std::vector<int> tgt_ids;  // gold outputs, ending with </s>
  Lexemes tgt_lexemes;
};

Example make_example(const Lexemes& input, const Lexemes& target, const Vocabulary& vocab);

/// Padded batch; masks are 1 exactly on real tokens.
struct Batch {
  std::vector<std::vector<int>> input_ids;
  std::vector<Lexemes> input_lexemes;
  std::vector<std::vector<char>> input_mask;
  std::vector<std::vector<int>> target_ids;
  std::vector<Lexemes> target_lexemes;
  std::vector<std::vector<char>> target_mask;

  std::size_t size() const { return input_ids.size(); }
  /// Real (unpadded) view of row `i`.
  Example example(std::size_t i) const;
};

Batch make_batch(const std::vector<Example>& examples);

// ---------------------------------------------------------------------------
// Forward

/// softmax(q·kᵀ/√d_k + mask)·v for one head. `mask` is additive (0 or -inf)
/// with shape q.rows()×k.rows(); `probs` receives the attention weights.
/// Throws std::invalid_argument on non-conforming shapes.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix* mask = nullptr,
                 Matrix* probs = nullptr);

/// Additive causal mask: 0 on and below the diagonal, -inf above.
Matrix causal_mask(std::size_t n);

/// Next-token distribution at one decoder position, over the vocabulary and
/// the source positions: P(vocab v) = gate·generate[v],
/// P(position j) = (1 − gate)·copy[j]. The two parts sum to 1.
struct StepDistribution {
  std::vector<double> generate;  // softmax over the vocabulary
  std::vector<double> copy;      // encoder attention, averaged over heads
  double gate = 1.0;

  double vocab_prob(std::size_t v) const { return gate * generate[v]; }
  double position_prob(std::size_t j) const { return (1.0 - gate) * copy[j]; }
  double total() const;
};

struct ForwardOptions {
  /// Replaces the learned gate when set (tests only).
  std::optional<double> gate_override;
};

/// Distributions after each prefix of `target_prefix`: entry i predicts the
/// token following <s> + target_prefix[0, i). Returns prefix.size() + 1 steps.
std::vector<StepDistribution> forward(const ModelState& state, const Lexemes& input, const Lexemes& target_prefix,
                                      const ForwardOptions& options = {});

/// Source lexemes missing from the vocabulary get ids V, V+1, ... so that a
/// StepDistribution can be folded into one distribution over output lexemes.
class ExtendedVocab {
 public:
  ExtendedVocab(const Vocabulary& vocab, const Lexemes& source);

  std::size_t size() const { return vocab_->size() + oov_.size(); }
  const std::string& lexeme(std::size_t id) const;
  /// Extended id of source position j.
  std::size_t source_id(std::size_t j) const { return source_ids_[j]; }
  /// Decoder input id for an extended id (<unk> for copied OOV lexemes).
  int input_id(std::size_t id) const;

  /// gate·generate[v] + (1 − gate)·Σ copy[j] over positions j holding v.
  std::vector<double> fold(const StepDistribution& step) const;

 private:
  const Vocabulary* vocab_;
  Lexemes oov_;
  std::vector<std::size_t> source_ids_;
};

/// Decodes one token at a time against a fixed source, caching self-attention
/// keys/values per hypothesis. Matches forward() on the same prefix.
class IncrementalDecoder {
 public:
  struct Cache {
    std::vector<Matrix> keys, values;  // per layer, one row per consumed token
    std::size_t length = 0;
  };

  IncrementalDecoder(const ModelState& state, const Lexemes& input);

  Cache start() const;
  /// Feeds decoder-input token id `token` and returns the distribution for the
  /// next position.
  StepDistribution step(Cache& cache, int token) const;

  const ExtendedVocab& extended() const { return extended_; }
  const ModelState& state() const { return *state_; }

 private:
  const ModelState* state_;
  ExtendedVocab extended_;
  std::vector<Matrix> cross_keys_, cross_values_;  // per decoder layer
};

// ---------------------------------------------------------------------------
// Training objective

struct LossOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

struct LossResult {
  double loss = 0.0;         // mean over non-padding target positions
  std::size_t positions = 0;
};

/// Label-smoothed cross entropy against the copy-aware target distribution.
LossResult loss(const ModelState& state, const Batch& batch, const LossOptions& options = {});

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss and its exact gradient. Examples are processed in parallel (OpenMP)
/// and reduced in batch order, so the result does not depend on the thread
/// count. Throws NonFiniteLoss on a non-finite loss.
LossResult loss_and_grad(const ModelState& state, const Batch& batch, Gradients& grads,
                         const LossOptions& options = {});

/// Serial reference for loss_and_grad: accumulates every example straight
/// into `grads`.
LossResult loss_and_grad_serial(const ModelState& state, const Batch& batch, Gradients& grads,
                                const LossOptions& options = {});

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Parameters m, v;
  std::int64_t t = 0;
};

AdamState make_adam_state(const ModelState& state);

/// One Adam update with bias correction; increments state.step.
void adam_step(ModelState& state, AdamState& adam, const Gradients& grads, double lr, const AdamConfig& config = {});

struct LrSchedule {
  std::int64_t decay_start = 50000;
  std::int64_t decay_every = 10000;
  double decay = 0.9;
};

/// base_lr before decay_start, then one extra factor of `decay` every
/// decay_every steps (the first at decay_start itself).
double lr_at(std::int64_t step, double base_lr, const LrSchedule& schedule = {});

// ---------------------------------------------------------------------------
// Checkpoints (CBOR container: config, vocabulary, step, tensors)

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------

template <class F>
void visit_layer_norm(const std::string& prefix, LayerNormWeights& w, F& f) {
  f(prefix + ".gain", w.gain);
  f(prefix + ".bias", w.bias);
}

template <class F>
void visit_attention(const std::string& prefix, AttentionWeights& w, F& f) {
  f(prefix + ".wq", w.wq);
  f(prefix + ".wk", w.wk);
  f(prefix + ".wv", w.wv);
  f(prefix + ".wo", w.wo);
  f(prefix + ".bq", w.bq);
  f(prefix + ".bk", w.bk);
  f(prefix + ".bv", w.bv);
  f(prefix + ".bo", w.bo);
}

template <class F>
void visit_ff(const std::string& prefix, FeedForwardWeights& w, F& f) {
  f(prefix + ".w1", w.w1);
  f(prefix + ".b1", w.b1);
  f(prefix + ".w2", w.w2);
  f(prefix + ".b2", w.b2);
}

template <class F>
void Parameters::visit(F&& f) {
  f(std::string("token_embedding"), token_embedding);
  f(std::string("position_embedding"), position_embedding);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l);
    visit_layer_norm(p + ".norm_attn", encoder[l].norm_attn, f);
    visit_attention(p + ".attn", encoder[l].attn, f);
    visit_layer_norm(p + ".norm_ff", encoder[l].norm_ff, f);
    visit_ff(p + ".ff", encoder[l].ff, f);
  }
  visit_layer_norm("encoder_norm", encoder_norm, f);
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string p = "decoder." + std::to_string(l);
    visit_layer_norm(p + ".norm_self", decoder[l].norm_self, f);
    visit_attention(p + ".self_attn", decoder[l].self_attn, f);
    visit_layer_norm(p + ".norm_cross", decoder[l].norm_cross, f);
    visit_attention(p + ".cross_attn", decoder[l].cross_attn, f);
    visit_layer_norm(p + ".norm_ff", decoder[l].norm_ff, f);
    visit_ff(p + ".ff", decoder[l].ff, f);
  }
  visit_layer_norm("decoder_norm", decoder_norm, f);
  f(std::string("output_weight"), output_weight);
  f(std::string("output_bias"), output_bias);
  f(std::string("gate_weight"), gate_weight);
  f(std::string("gate_bias"), gate_bias);
}

template <class F>
void Parameters::visit(F&& f) const {
  const_cast<Parameters*>(this)->visit([&f](const std::string& name, Matrix& m) { f(name, std::as_const(m)); });
}

}  // namespace vrepair::micronet
