#include "vrepair/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "vrepair/inference.hpp"

namespace vrepair::training {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || batch_size == 0 || eval_interval <= 0 || patience < 1 || max_steps < 0 ||
      !(target_lr_factor > 0.0) || eval_beam == 0 || max_decode_len == 0) {
    throw std::invalid_argument("train config: fields must be positive");
  }
  if (schedule.decay_every <= 0 || schedule.decay_start < 0) throw std::invalid_argument("train config: bad schedule");
}

void SplitSpec::validate() const {
  if (strategy == Strategy::kRandom) {
    if (random.train < 0 || random.val < 0 || random.test < 0 ||
        std::abs(random.train + random.val + random.test - 1.0) > 1e-9) {
      throw std::invalid_argument("split fractions must be non-negative and sum to 1");
    }
  } else if (time.val_start.empty() || time.test_start.empty() || time.val_start > time.test_start) {
    throw std::invalid_argument("time split needs ordered val_start <= test_start");
  }
}

Splits split(const std::vector<Sample>& dataset, const SplitSpec& spec) {
  spec.validate();
  Splits out;
  if (spec.strategy == SplitSpec::Strategy::kRandom) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(spec.random.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(dataset.size());
    const auto n_train = static_cast<std::size_t>(std::llround(spec.random.train * n));
    const auto n_val = std::min(dataset.size() - n_train, static_cast<std::size_t>(std::llround(spec.random.val * n)));
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto& dst = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
      dst.push_back(dataset[order[k]]);
    }
  } else {
    for (const auto& s : dataset) {
      if (s.meta.date.empty()) throw std::invalid_argument("time split: sample " + s.meta.id + " has no date");
      if (s.meta.date < spec.time.val_start) {
        out.train.push_back(s);
      } else if (s.meta.date < spec.time.test_start) {
        out.val.push_back(s);
      } else {
        out.test.push_back(s);
      }
    }
  }

  using Key = std::pair<Lexemes, Lexemes>;
  std::set<Key> test_keys, held_keys;
  for (const auto& s : out.test) {
    test_keys.insert({s.input, s.target});
    held_keys.insert({s.input, s.target});
  }
  std::erase_if(out.val, [&](const Sample& s) { return test_keys.count({s.input, s.target}) != 0; });
  for (const auto& s : out.val) held_keys.insert({s.input, s.target});
  std::erase_if(out.train, [&](const Sample& s) { return held_keys.count({s.input, s.target}) != 0; });
  return out;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

bool EarlyStopper::observe(double metric) {
  const bool improved = best_index_ < 0 || metric > best_;
  if (improved) {
    best_ = metric;
    best_index_ = seen_;
    bad_ = 0;
  } else {
    ++bad_;
  }
  ++seen_;
  return improved;
}

void write_log_line(std::ostream& out, const LogEntry& e) {
  const nlohmann::json j{{"step", e.step}, {"train_loss", e.train_loss}, {"val_metric", e.val_metric}, {"lr", e.lr}};
  out << j.dump() << '\n';
}

std::vector<micronet::Example> to_examples(const std::vector<Sample>& samples, const encoding::Vocabulary& vocab) {
  std::vector<micronet::Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(micronet::make_example(s.input, s.target, vocab));
  return out;
}

TrainResult run_training(micronet::ModelState init, const std::vector<micronet::Example>& train,
                         const TrainConfig& config, double lr_factor, const Evaluator& evaluate, const LogSink& sink) {
  config.validate();
  TrainResult result;
  result.best = init;
  if (config.max_steps == 0) return result;
  if (train.empty()) throw std::invalid_argument("training set is empty");

  micronet::ModelState state = std::move(init);
  auto adam = micronet::make_adam_state(state);
  EarlyStopper stopper(config.patience);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const double base = config.base_lr * lr_factor;

  double loss_sum = 0.0;
  std::int64_t loss_steps = 0;
  micronet::Gradients grads;
  for (std::int64_t step = 0; step < config.max_steps; ++step) {
    std::vector<micronet::Example> batch;
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    const double lr = micronet::lr_at(step, base, config.schedule);
    micronet::LossResult r;
    try {
      r = micronet::loss_and_grad(state, micronet::make_batch(batch), grads, {true, config.seed});
    } catch (const micronet::NonFiniteLoss&) {
      result.diverged = true;
      if (stopper.best_index() < 0) result.best = state;
      return result;
    }
    micronet::adam_step(state, adam, grads, lr);
    if (!state.params.all_finite()) {
      result.diverged = true;
      return result;
    }
    result.steps = step + 1;
    loss_sum += r.loss;
    ++loss_steps;

    const bool last = step + 1 == config.max_steps;
    if ((step + 1) % config.eval_interval == 0 || last) {
      const LogEntry entry{step + 1, loss_sum / static_cast<double>(loss_steps), evaluate(state), lr};
      loss_sum = 0.0;
      loss_steps = 0;
      result.log.push_back(entry);
      if (sink) sink(entry);
      if (stopper.observe(entry.val_metric)) {
        result.best = state;
        result.best_metric = entry.val_metric;
      }
      if (stopper.should_stop() && !last) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

double validation_accuracy(const micronet::ModelState& state, const std::vector<Sample>& val, std::size_t beam,
                           std::size_t max_len) {
  if (val.empty()) return 0.0;
  std::vector<char> hit(val.size(), 0);
  detail::parallel_for(val.size(), [&](std::size_t i) {
    for (const auto& h : inference::neural_beam(state, val[i].input, beam, max_len)) {
      if (h.finished && h.tokens == val[i].target) {
        hit[i] = 1;
        break;
      }
    }
  });
  const auto n = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(n) / static_cast<double>(val.size());
}

double validation_token_accuracy(const micronet::ModelState& state, const std::vector<Sample>& val) {
  std::vector<std::size_t> hits(val.size(), 0), totals(val.size(), 0);
  detail::parallel_for(val.size(), [&](std::size_t i) {
    const auto& s = val[i];
    const micronet::ExtendedVocab ext(state.vocab, s.input);
    const auto steps = micronet::forward(state, s.input, s.target);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto folded = ext.fold(steps[t]);
      const auto best = static_cast<std::size_t>(std::max_element(folded.begin(), folded.end()) - folded.begin());
      const auto& gold = t < s.target.size() ? s.target[t] : state.vocab.lexeme(encoding::Vocabulary::kEos);
      hits[i] += ext.lexeme(best) == gold;
    }
    totals[i] = steps.size();
  });
  const auto total = std::accumulate(totals.begin(), totals.end(), std::size_t{0});
  if (total == 0) return 0.0;
  return static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0})) / static_cast<double>(total);
}

namespace {

Evaluator val_evaluator(const std::vector<Sample>& val, const TrainConfig& config) {
  if (config.val_metric == TrainConfig::ValMetric::kToken) {
    return [&val](const micronet::ModelState& s) { return validation_token_accuracy(s, val); };
  }
  return [&val, beam = config.eval_beam, len = config.max_decode_len](const micronet::ModelState& s) {
    return validation_accuracy(s, val, beam, len);
  };
}

}  // namespace

TrainResult train_source(const TrainConfig& config, const micronet::ModelConfig& model_config,
                         const encoding::Vocabulary& vocab, const std::vector<Sample>& train,
                         const std::vector<Sample>& val, const LogSink& sink) {
  if (train.empty() || val.empty()) throw std::invalid_argument("train_source needs non-empty train and val sets");
  auto init = micronet::init_model(model_config, vocab, config.seed);
  return run_training(std::move(init), to_examples(train, vocab), config, 1.0, val_evaluator(val, config), sink);
}

TrainResult tune_target(const micronet::ModelState& source, const TrainConfig& config,
                        const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const std::optional<encoding::Vocabulary>& vocab, const LogSink& sink) {
  if (vocab && !(*vocab == source.vocab)) throw VocabularyMismatch("vocabulary differs from the checkpoint's");
  for (const auto* set : {&train, &val}) {
    for (const auto& s : *set) {
      if (!s.input.empty() && !source.vocab.contains(s.input.front())) {
        throw VocabularyMismatch("CWE token " + s.input.front() + " is not in the checkpoint vocabulary");
      }
    }
  }
  if (config.max_steps > 0 && (train.empty() || val.empty())) {
    throw std::invalid_argument("tune_target needs non-empty train and val sets");
  }
  return run_training(source, to_examples(train, source.vocab), config, config.target_lr_factor,
                      val_evaluator(val, config), sink);
}

TrainResult pretrain_denoise(const TrainConfig& config, const micronet::ModelConfig& model_config,
                             const encoding::Vocabulary& vocab, const std::vector<Sample>& noised_train,
                             const std::vector<Sample>& noised_val, const LogSink& sink) {
  return train_source(config, model_config, vocab, noised_train, noised_val, sink);
}

}  // namespace vrepair::training
