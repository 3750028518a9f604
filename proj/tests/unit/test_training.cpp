#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "vrepair/training.hpp"

using namespace vrepair;
using namespace vrepair::training;
using oracle::split_words;

namespace {

std::vector<Sample> numbered(std::size_t n) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.cwe_token = "CWE-000";
    s.input = {"CWE-000", "f", std::to_string(i)};
    s.target = {"<ModStart>", std::to_string(i)};
    s.meta.id = std::to_string(i);
    out.push_back(s);
  }
  return out;
}

std::set<std::string> ids(const std::vector<Sample>& v) {
  std::set<std::string> out;
  for (const auto& s : v) out.insert(s.meta.id);
  return out;
}

micronet::ModelConfig toy_config() {
  micronet::ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.model_dim = 8;
  c.ff_dim = 16;
  c.max_positions = 32;
  return c;
}

// Task: emit the token between the localization markers.
std::vector<Sample> marker_task(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Lexemes words = {"a", "b", "c", "d", "e"};
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.cwe_token = "CWE-000";
    s.input = {"CWE-000"};
    const std::size_t len = 3 + rng() % 4, at = rng() % len;
    for (std::size_t k = 0; k < len; ++k) {
      if (k == at) s.input.push_back("<StartLoc>");
      s.input.push_back(words[rng() % words.size()]);
      if (k == at) s.input.push_back("<EndLoc>");
    }
    s.target = {s.input[at + 2]};
    s.meta.id = std::to_string(i);
    out.push_back(s);
  }
  return out;
}

encoding::Vocabulary toy_vocab() {
  auto lex = encoding::Vocabulary::reserved();
  for (const char* w : {"CWE-000", "a", "b", "c", "d", "e"}) lex.push_back(w);
  return encoding::Vocabulary(lex);
}

// Evaluator replaying a fixed metric trace.
Evaluator scripted(std::vector<double> trace, std::vector<std::int64_t>* seen_steps = nullptr) {
  auto k = std::make_shared<std::size_t>(0);
  return [trace, k, seen_steps](const micronet::ModelState& s) {
    if (seen_steps) seen_steps->push_back(s.step);
    return trace.at((*k)++);
  };
}

TrainConfig fast_config() {
  TrainConfig c;
  c.base_lr = 1e-2;
  c.batch_size = 4;
  c.eval_interval = 5;
  c.max_steps = 40;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("random split arithmetic") {
  const auto s10 = split(numbered(10), {});
  CHECK(s10.train.size() == 7);
  CHECK(s10.val.size() == 1);
  CHECK(s10.test.size() == 2);

  const auto s = split(numbered(3180), {});
  CHECK(s.train.size() == 2226);
  CHECK(s.val.size() == 318);
  CHECK(s.test.size() == 636);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    const auto i = ids(*part);
    all.insert(i.begin(), i.end());
  }
  CHECK(all.size() == 3180);

  SplitSpec bad;
  bad.random = {0.5, 0.5, 0.5, 0};
  CHECK_THROWS_AS(split(numbered(3), bad), std::invalid_argument);
}

TEST_CASE("seeded split snapshot") {
  SplitSpec spec;
  spec.random.seed = 42;
  const auto a = split(numbered(10), spec);
  const auto b = split(numbered(10), spec);
  CHECK(a.train == b.train);
  std::vector<std::string> order;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& s : *part) order.push_back(s.meta.id);
  }
  CHECK(order == std::vector<std::string>{"6", "9", "1", "4", "5", "3", "0", "7", "8", "2"});
  spec.random.seed = 43;
  CHECK(split(numbered(10), spec).train != a.train);
}

TEST_CASE("time split honours thresholds") {
  auto data = numbered(6);
  const char* dates[] = {"2017-12-31", "2018-01-01", "2019-12-31", "2020-01-01", "2016-05-05", "2021-01-01"};
  for (std::size_t i = 0; i < data.size(); ++i) data[i].meta.date = dates[i];
  SplitSpec spec;
  spec.strategy = SplitSpec::Strategy::kTime;
  spec.time = {"2018-01-01", "2020-01-01"};
  const auto s = split(data, spec);
  CHECK(ids(s.train) == std::set<std::string>{"0", "4"});
  CHECK(ids(s.val) == std::set<std::string>{"1", "2"});
  CHECK(ids(s.test) == std::set<std::string>{"3", "5"});

  spec.time = {"2030-01-01", "2030-01-01"};
  CHECK(split(data, spec).train.size() == 6);
  data[2].meta.date.clear();
  CHECK_THROWS_AS(split(data, spec), std::invalid_argument);
  spec.time = {"2020-01-01", "2018-01-01"};
  CHECK_THROWS_AS(split(numbered(1), spec), std::invalid_argument);
}

TEST_CASE("duplicates across splits leave train") {
  auto data = numbered(40);
  for (std::size_t i = 20; i < 40; ++i) {
    data[i].input = data[i - 20].input;
    data[i].target = data[i - 20].target;
  }
  const auto s = split(data, {});
  using Key = std::pair<Lexemes, Lexemes>;
  std::set<Key> tr, va, te;
  for (const auto& x : s.train) tr.insert({x.input, x.target});
  for (const auto& x : s.val) va.insert({x.input, x.target});
  for (const auto& x : s.test) te.insert({x.input, x.target});
  for (const auto& k : tr) {
    CHECK(va.count(k) == 0);
    CHECK(te.count(k) == 0);
  }
  for (const auto& k : va) CHECK(te.count(k) == 0);
  CHECK(s.test.size() == 8);
}

TEST_CASE("early stopping traces") {
  EarlyStopper flat(2);
  for (double m : {0.3, 0.3}) {
    flat.observe(m);
    CHECK_FALSE(flat.should_stop());
  }
  flat.observe(0.3);
  CHECK(flat.should_stop());
  CHECK(flat.best_index() == 0);

  EarlyStopper rising(2);
  for (double m : {0.1, 0.2, 0.2}) {
    rising.observe(m);
    CHECK_FALSE(rising.should_stop());
  }
  rising.observe(0.2);
  CHECK(rising.should_stop());
  CHECK(rising.best_index() == 1);
  CHECK(rising.best() == 0.2);

  // non-consecutive misses do not add up
  EarlyStopper bumpy(2);
  for (double m : {0.1, 0.05, 0.2, 0.1, 0.3, 0.3}) {
    bumpy.observe(m);
  }
  CHECK_FALSE(bumpy.should_stop());
  CHECK(bumpy.best_index() == 4);
  CHECK_THROWS_AS(EarlyStopper(0), std::invalid_argument);
}

TEST_CASE("training loop follows the stopper") {
  const auto data = to_examples(marker_task(20, 1), toy_vocab());
  const auto init = micronet::init_model(toy_config(), toy_vocab(), 3);

  std::vector<std::int64_t> steps;
  auto flat = run_training(init, data, fast_config(), 1.0, scripted({0.3, 0.3, 0.3, 0.9}, &steps));
  CHECK(flat.log.size() == 3);
  CHECK(flat.stopped_early);
  CHECK(flat.best.step == 5);
  CHECK(flat.best_metric == 0.3);
  CHECK(steps == std::vector<std::int64_t>{5, 10, 15});

  auto rising = run_training(init, data, fast_config(), 1.0, scripted({0.1, 0.2, 0.2, 0.2, 0.9}));
  CHECK(rising.log.size() == 4);
  CHECK(rising.best.step == 10);

  std::vector<double> up(8);
  std::iota(up.begin(), up.end(), 0.0);
  auto full = run_training(init, data, fast_config(), 1.0, scripted(up));
  CHECK_FALSE(full.stopped_early);
  CHECK(full.steps == 40);
  CHECK(full.best.step == 40);

  // an evaluation always follows the last step
  auto cfg = fast_config();
  cfg.max_steps = 12;
  steps.clear();
  auto tail = run_training(init, data, cfg, 1.0, scripted({0.1, 0.2, 0.3}, &steps));
  CHECK(steps == std::vector<std::int64_t>{5, 10, 12});

  // every later evaluation is no better than the returned one
  for (const auto* r : {&flat, &rising, &full, &tail}) {
    for (const auto& e : r->log) {
      if (e.step > r->best.step) CHECK(e.val_metric <= r->best_metric);
    }
  }
}

TEST_CASE("zero steps return the initial state") {
  const auto init = micronet::init_model(toy_config(), toy_vocab(), 3);
  auto cfg = fast_config();
  cfg.max_steps = 0;
  const auto r = run_training(init, {}, cfg, 1.0, scripted({}));
  CHECK(r.best.params.token_embedding == init.params.token_embedding);
  CHECK(r.best.step == 0);
  CHECK(r.log.empty());
  const auto t = tune_target(init, cfg, {}, {});
  CHECK(t.best.params.output_weight == init.params.output_weight);
}

TEST_CASE("tuning runs at a tenth of the learning rate") {
  const auto task = marker_task(30, 2);
  const auto init = micronet::init_model(toy_config(), toy_vocab(), 3);
  auto cfg = fast_config();
  cfg.max_steps = 5;
  const auto src = run_training(init, to_examples(task, toy_vocab()), cfg, 1.0, scripted({0.0}));
  const auto tuned = tune_target(init, cfg, task, task);
  REQUIRE(src.log.size() == 1);
  REQUIRE(tuned.log.size() == 1);
  CHECK(src.log[0].lr == doctest::Approx(cfg.base_lr));
  CHECK(tuned.log[0].lr == doctest::Approx(0.1 * cfg.base_lr));
  CHECK(tuned.best.vocab == init.vocab);
  CHECK(tuned.best.config.model_dim == init.config.model_dim);

  auto other = toy_vocab().lexemes();
  other.push_back("zz");
  CHECK_THROWS_AS(tune_target(init, cfg, task, task, encoding::Vocabulary(other)), VocabularyMismatch);
  auto foreign = task;
  foreign[0].input[0] = "CWE-999";
  CHECK_THROWS_AS(tune_target(init, cfg, foreign, task), VocabularyMismatch);
}

TEST_CASE("divergence keeps a finite checkpoint") {
  const auto init = micronet::init_model(toy_config(), toy_vocab(), 3);
  auto cfg = fast_config();
  cfg.base_lr = 1e305;
  const auto r = run_training(init, to_examples(marker_task(10, 3), toy_vocab()), cfg, 1.0, scripted({0.0, 0.0}));
  CHECK(r.diverged);
  CHECK(r.best.params.all_finite());
}

TEST_CASE("seeded toy run is reproducible") {
  const auto train = marker_task(60, 4), val = marker_task(20, 5);
  auto cfg = fast_config();
  cfg.max_steps = 60;
  cfg.eval_interval = 20;
  const auto a = train_source(cfg, toy_config(), toy_vocab(), train, val);
  const auto b = train_source(cfg, toy_config(), toy_vocab(), train, val);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_metric == b.log[i].val_metric);
  }
  CHECK(a.best.params.output_weight == b.best.params.output_weight);
  CHECK(a.steps == 60);
  CHECK(a.log.size() == 3);
  CHECK(a.log.back().train_loss < a.log.front().train_loss);

  std::ostringstream line;
  write_log_line(line, {20, 1.5, 0.25, 0.001});
  CHECK(line.str() == "{\"lr\":0.001,\"step\":20,\"train_loss\":1.5,\"val_metric\":0.25}\n");
}

TEST_CASE("identity denoising is learned and loads into tuning") {
  // noiseless samples: the target is the empty diff
  std::vector<Sample> train = marker_task(40, 6);
  for (auto& s : train) s.target.clear();
  auto val = std::vector<Sample>(train.begin(), train.begin() + 10);
  auto cfg = fast_config();
  cfg.max_steps = 60;
  cfg.eval_interval = 20;
  const auto r = pretrain_denoise(cfg, toy_config(), toy_vocab(), train, val);
  CHECK(validation_accuracy(r.best, val, 1, 10) >= 0.99);
  cfg.max_steps = 5;
  CHECK_NOTHROW(tune_target(r.best, cfg, marker_task(10, 7), marker_task(5, 8)));
}

TEST_CASE("token accuracy as the validation metric") {
  std::vector<Sample> train = marker_task(40, 6);
  for (auto& s : train) s.target.clear();
  auto val = std::vector<Sample>(train.begin(), train.begin() + 10);
  auto cfg = fast_config();
  cfg.max_steps = 60;
  cfg.eval_interval = 20;
  cfg.val_metric = TrainConfig::ValMetric::kToken;
  const auto r = pretrain_denoise(cfg, toy_config(), toy_vocab(), train, val);
  CHECK(r.best_metric >= 0.99);
  CHECK(r.best_metric == validation_token_accuracy(r.best, val));
  CHECK(validation_token_accuracy(r.best, {}) == 0.0);

  // a greedy exact match has every gold token as the argmax
  const auto task = marker_task(20, 9);
  cfg.val_metric = TrainConfig::ValMetric::kSequence;
  cfg.max_steps = 40;
  const auto m = train_source(cfg, toy_config(), toy_vocab(), task, task).best;
  int checked = 0;
  for (const auto& s : task) {
    if (validation_accuracy(m, {s}, 1, 10) == 1.0) {
      CHECK(validation_token_accuracy(m, {s}) == 1.0);
      ++checked;
    }
  }
  CHECK(checked > 0);
  const double tok = validation_token_accuracy(m, task);
  CHECK(tok >= 0.0);
  CHECK(tok <= 1.0);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
