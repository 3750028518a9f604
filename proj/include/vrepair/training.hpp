#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrepair/encoding.hpp"
#include "vrepair/micronet.hpp"

namespace vrepair::training {

using encoding::Sample;

struct TrainConfig {
  /// kToken: teacher-forced next-token accuracy, for runs whose exact-match
  /// accuracy stays at zero (denoising).
  enum class ValMetric { kSequence, kToken };

  double base_lr = 1e-4;
  std::size_t batch_size = 32;
  std::int64_t eval_interval = 500;
  int patience = 2;
  std::int64_t max_steps = 10000;
  std::uint64_t seed = 0;
  double target_lr_factor = 0.1;
  std::size_t eval_beam = 1;
  std::size_t max_decode_len = 100;
  ValMetric val_metric = ValMetric::kSequence;
  micronet::LrSchedule schedule;

  /// Throws std::invalid_argument on non-positive fields.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Splitting

struct RandomSplit {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  std::uint64_t seed = 0;
};

struct TimeSplit {
  std::string val_start;   // ISO date; earlier samples train
  std::string test_start;  // on or after: test
};

struct SplitSpec {
  enum class Strategy { kRandom, kTime } strategy = Strategy::kRandom;
  RandomSplit random;
  TimeSplit time;

  void validate() const;
};

struct Splits {
  std::vector<Sample> train, val, test;
};

/// Random: seeded shuffle, then cuts at round(train·n) and round(val·n).
/// Time: date < val_start → train, < test_start → val, else test.
/// A sample identical (input and target) to one in test is dropped from val
/// and train; one identical to a val sample is dropped from train.
/// Throws std::invalid_argument for time splits over undated samples.
Splits split(const std::vector<Sample>& dataset, const SplitSpec& spec);

// ---------------------------------------------------------------------------
// Loop

/// Stops after `patience` strictly consecutive evaluations without a strict
/// improvement over the best metric so far.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  /// Records one evaluation; returns true when it is the new best.
  bool observe(double metric);
  bool should_stop() const { return bad_ >= patience_; }
  double best() const { return best_; }
  /// 0-based index of the best evaluation, -1 before the first.
  int best_index() const { return best_index_; }
  int evaluations() const { return seen_; }

 private:
  int patience_;
  int bad_ = 0;
  int seen_ = 0;
  int best_index_ = -1;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct LogEntry {
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean over the steps since the previous entry
  double val_metric = 0.0;
  double lr = 0.0;
};

void write_log_line(std::ostream& out, const LogEntry& entry);

using Evaluator = std::function<double(const micronet::ModelState&)>;
using LogSink = std::function<void(const LogEntry&)>;

struct TrainResult {
  micronet::ModelState best;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::int64_t steps = 0;
  std::vector<LogEntry> log;
  bool stopped_early = false;
  bool diverged = false;
};

/// The shared loop. `lr_factor` scales base_lr; the schedule counts steps of
/// this phase only. Evaluates every eval_interval steps and after the last
/// step. With zero steps, returns `init` unchanged. On a non-finite loss the
/// run ends and returns the best checkpoint so far, or the last finite state
/// when nothing was evaluated yet.
TrainResult run_training(micronet::ModelState init, const std::vector<micronet::Example>& train,
                         const TrainConfig& config, double lr_factor, const Evaluator& evaluate,
                         const LogSink& sink = {});

/// Validation sequence accuracy at `beam`.
double validation_accuracy(const micronet::ModelState& state, const std::vector<Sample>& val,
                           std::size_t beam, std::size_t max_len);

/// Fraction of target tokens (and the final </s>) that are the argmax of the
/// folded output distribution given the gold prefix.
double validation_token_accuracy(const micronet::ModelState& state, const std::vector<Sample>& val);

std::vector<micronet::Example> to_examples(const std::vector<Sample>& samples, const encoding::Vocabulary& vocab);

/// Fresh model over `vocab`, trained on the source domain.
TrainResult train_source(const TrainConfig& config, const micronet::ModelConfig& model_config,
                         const encoding::Vocabulary& vocab, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const LogSink& sink = {});

class VocabularyMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Continues from `source` at target_lr_factor × base_lr with fresh Adam
/// moments. Throws VocabularyMismatch when `vocab` is given and differs from
/// the checkpoint's, or when a sample's CWE token is not in it.
TrainResult tune_target(const micronet::ModelState& source, const TrainConfig& config,
                        const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const std::optional<encoding::Vocabulary>& vocab = std::nullopt, const LogSink& sink = {});

/// train_source over noise-generated samples.
TrainResult pretrain_denoise(const TrainConfig& config, const micronet::ModelConfig& model_config,
                             const encoding::Vocabulary& vocab, const std::vector<Sample>& noised_train,
                             const std::vector<Sample>& noised_val, const LogSink& sink = {});

}  // namespace vrepair::training
