// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance            all criteria
//   acceptance --quick    skips the two training experiments

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "vrepair/diffcodec.hpp"
#include "vrepair/encoding.hpp"
#include "vrepair/evalrep.hpp"
#include "vrepair/inference.hpp"
#include "vrepair/micronet.hpp"
#include "vrepair/mining.hpp"
#include "vrepair/synthetic.hpp"
#include "vrepair/training.hpp"

using namespace vrepair;
namespace dc = vrepair::diffcodec;

namespace {

// Tolerances and sizes.
constexpr std::size_t kCodecPairs = 1200;
constexpr double kCodecSeconds = 60.0;
constexpr std::size_t kEnumerationCap = 2000;
constexpr std::size_t kOracleCases = 500;
constexpr std::size_t kOracleMaxTokens = 60;
constexpr std::size_t kGradCoordinates = 200;
constexpr double kGradTolerance = 1e-4;
constexpr int kFuzzSteps = 100;
constexpr double kNormTolerance = 1e-6;
constexpr double kTransferMargin = 0.05;
constexpr double kTransferSeconds = 30 * 60.0;
constexpr int kTransferSeeds = 3;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------

void codec_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::size_t pairs = 0, checks = 0, contained = 0, unique_cases = 0, unique_exact = 0, enumerated = 0;
  while (pairs < kCodecPairs) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(10, 200)(rng);
    const std::size_t alphabet = pairs % 2 ? 6 : 60;
    const auto src = oracle::random_stream(rng, len, alphabet);
    const int edits = std::uniform_int_distribution<int>(1, 4)(rng);
    const auto tgt = oracle::random_edits(rng, src, edits, alphabet);
    if (tgt == src || tgt.size() > 200 || tgt.size() < 10) continue;
    ++pairs;
    for (int n : {1, 2, 3}) {
      ++checks;
      const auto d = dc::extract_diff(src, tgt, n);
      // complete enumeration when it stays under the cap, pruned membership search otherwise
      bool ok = false;
      std::vector<Lexemes> programs;
      try {
        programs = dc::enumerate_applications(src, d, kEnumerationCap);
      } catch (const dc::NoInterpretation&) {
      }
      if (programs.size() < kEnumerationCap) {
        ++enumerated;
        ok = std::find(programs.begin(), programs.end(), tgt) != programs.end();
      } else {
        ok = dc::has_interpretation(src, d, tgt);
      }
      contained += ok;
      bool unique = true;
      for (const auto& op : d.ops) {
        unique = unique && oracle::all_matches(src, static_cast<std::size_t>(n), op.start_ctx).size() == 1;
        if (op.end_ctx) unique = unique && oracle::all_matches(src, static_cast<std::size_t>(n), *op.end_ctx).size() == 1;
      }
      if (unique) {
        ++unique_cases;
        const auto programs = dc::enumerate_applications(src, d, dc::kUnbounded);
        unique_exact += programs.size() == 1 && programs[0] == tgt;
      }
    }
  }
  const double secs = seconds_since(t0);
  report("codec soundness", contained == checks && unique_exact == unique_cases && secs < kCodecSeconds,
         fmt("%zu pairs, %zu/%zu extractions contain the target (%zu fully enumerated), "
             "%zu/%zu unique-context cases enumerate exactly the target, %.1fs",
             pairs, contained, checks, enumerated, unique_exact, unique_cases, secs));
}

void interpretation_oracle() {
  std::mt19937_64 rng(77);
  std::size_t agree = 0, sets_agree = 0, ambiguous = 0;
  for (std::size_t c = 0; c < kOracleCases; ++c) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(4, kOracleMaxTokens - 8)(rng);
    const auto src = oracle::random_stream(rng, len, 3 + c % 4);
    auto tgt = oracle::random_edits(rng, src, 1 + static_cast<int>(c % 3), 3 + c % 4);
    if (tgt.size() > kOracleMaxTokens) tgt.resize(kOracleMaxTokens);
    const int n = 1 + static_cast<int>(c % 3);
    const auto d = dc::extract_diff(src, tgt, n);
    const auto brute = oracle::brute_force_applications(src, d);
    const std::size_t count = dc::count_interpretations(src, d);
    agree += count == brute.size();
    ambiguous += count > 1;
    const auto listed = dc::enumerate_applications(src, d, dc::kUnbounded);
    sets_agree += std::set<Lexemes>(listed.begin(), listed.end()) == brute && listed.size() == brute.size();
  }
  report("interpretation count oracle", agree == kOracleCases && sets_agree == kOracleCases,
         fmt("%zu/%zu counts and %zu/%zu program sets match brute force (%zu ambiguous cases)", agree, kOracleCases,
             sets_agree, kOracleCases, ambiguous));
}

void getvalue_example() {
  const auto buggy = oracle::getvalue_buggy(), fixed = oracle::getvalue_fixed();
  const auto c3 = dc::count_interpretations(buggy, dc::extract_diff(buggy, fixed, 3));
  const auto c2 = dc::count_interpretations(buggy, dc::extract_diff(buggy, fixed, 2));
  report("getValue example", c3 == 1 && c2 == 3,
         fmt("%zu interpretation(s) at context 3, %zu at context 2", c3, c2));
}

// ---------------------------------------------------------------------------

encoding::Vocabulary twenty_entries() {
  auto lex = encoding::Vocabulary::reserved();
  for (const char* w : {"CWE-000", "if", "(", ")", "x", "<", "0", ";", "return"}) lex.push_back(w);
  return encoding::Vocabulary(lex);
}

void gradient_check() {
  const auto vocab = twenty_entries();
  micronet::ModelConfig mc;
  mc.num_layers = 2;
  mc.num_heads = 2;
  mc.model_dim = 16;
  mc.ff_dim = 32;
  mc.max_positions = 32;
  auto s = micronet::init_model(mc, vocab, 11);
  const auto batch = micronet::make_batch({
      micronet::make_example({"CWE-000", "if", "(", "x", "<", "0", ")", "return", ";"},
                             {"<ModStart>", "(", "x", "<", "<ModEnd>", "0"}, vocab),
      micronet::make_example({"CWE-000", "return", "oov_name", ";"}, {"<ModStart>", "return", "oov_name"}, vocab),
  });
  micronet::Gradients g;
  micronet::loss_and_grad(s, batch, g);

  std::vector<Matrix*> ps;
  std::vector<const Matrix*> gs;
  s.params.visit([&](const std::string&, Matrix& m) { ps.push_back(&m); });
  g.visit([&](const std::string&, const Matrix& m) { gs.push_back(&m); });
  std::size_t total = 0;
  for (auto* p : ps) total += p->size();
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (std::size_t c = 0; c < kGradCoordinates; ++c) {
    std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng), k = 0;
    while (flat >= ps[k]->size()) flat -= ps[k++]->size();
    const double h = 1e-5, keep = (*ps[k])[flat];
    (*ps[k])[flat] = keep + h;
    const double up = micronet::loss(s, batch).loss;
    (*ps[k])[flat] = keep - h;
    const double down = micronet::loss(s, batch).loss;
    (*ps[k])[flat] = keep;
    const double numeric = (up - down) / (2 * h), analytic = (*gs[k])[flat];
    worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  report("gradient correctness", worst < kGradTolerance,
         fmt("%zu coordinates of %zu, worst relative error %.2e", kGradCoordinates, total, worst));
}

void normalization_fuzz() {
  const auto vocab = twenty_entries();
  micronet::ModelConfig mc;
  mc.num_layers = 2;
  mc.num_heads = 4;
  mc.model_dim = 16;
  mc.ff_dim = 32;
  mc.max_positions = 128;
  std::mt19937_64 rng(9);
  double worst = 0.0;
  int steps = 0, run = 0;
  while (steps < kFuzzSteps) {
    const auto s = micronet::init_model(mc, vocab, 100 + run++);
    Lexemes input{"CWE-000"};
    const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
    for (std::size_t i = 0; i < len; ++i) {
      const auto r = rng() % 12;
      input.push_back(r < 9 ? vocab.lexeme(static_cast<int>(11 + r)) : "oov" + std::to_string(r));
    }
    const micronet::IncrementalDecoder dec(s, input);
    auto cache = dec.start();
    int token = encoding::Vocabulary::kBos;
    for (int t = 0; t < 20 && steps < kFuzzSteps; ++t, ++steps) {
      const auto step = dec.step(cache, token);
      worst = std::max(worst, std::abs(step.total() - 1.0));
      const auto folded = dec.extended().fold(step);
      double sum = 0.0;
      for (double p : folded) sum += p;
      worst = std::max(worst, std::abs(sum - 1.0));
      std::discrete_distribution<std::size_t> pick(folded.begin(), folded.end());
      token = dec.extended().input_id(pick(rng));
    }
  }
  report("distribution normalization", worst < kNormTolerance,
         fmt("%d decode steps over %d random models, worst |sum - 1| = %.2e", steps, run, worst));
}

// ---------------------------------------------------------------------------

micronet::ModelConfig toy_model() {
  micronet::ModelConfig mc;
  mc.num_layers = 1;
  mc.num_heads = 2;
  mc.model_dim = 8;
  mc.ff_dim = 16;
  mc.max_positions = 32;
  return mc;
}

training::TrainResult scripted_run(const std::vector<double>& trace) {
  const auto vocab = twenty_entries();
  const std::vector<micronet::Example> train = {
      micronet::make_example({"CWE-000", "x", "<", "0"}, {"<ModStart>", "x"}, vocab)};
  training::TrainConfig tc;
  tc.base_lr = 1e-3;
  tc.batch_size = 1;
  tc.eval_interval = 5;
  tc.max_steps = 5 * static_cast<std::int64_t>(trace.size() + 3);
  std::size_t calls = 0;
  auto evaluate = [&](const micronet::ModelState&) { return trace.at(std::min(calls++, trace.size() - 1)); };
  return training::run_training(micronet::init_model(toy_model(), vocab, 1), train, tc, 1.0, evaluate);
}

void early_stopping() {
  const auto flat = scripted_run({0.3, 0.3, 0.3});
  const auto rising = scripted_run({0.1, 0.2, 0.2, 0.2});
  const bool ok = flat.stopped_early && flat.log.size() == 3 && flat.best.step == 5 && rising.stopped_early &&
                  rising.log.size() == 4 && rising.best.step == 10;
  report("early stopping", ok,
         fmt("{0.3,0.3,0.3}: %zu evaluations, best checkpoint at step %lld; "
             "{0.1,0.2,0.2,0.2}: %zu evaluations, best at step %lld",
             flat.log.size(), static_cast<long long>(flat.best.step), rising.log.size(),
             static_cast<long long>(rising.best.step)));
}

void mining_fixture() {
  std::size_t right = 0, regex_agree = 0;
  const auto& msgs = fixture::commit_messages();
  for (const auto& [msg, label] : msgs) {
    const bool got = mining::is_bugfix_message(msg);
    right += got == label;
    regex_agree += got == fixture::regex_rule(msg);
  }
  report("mining heuristic", right == msgs.size() && regex_agree == msgs.size(),
         fmt("%zu/%zu messages match their labels, %zu/%zu match the reference rule", right, msgs.size(), regex_agree,
             msgs.size()));
}

void split_arithmetic() {
  synthetic::SynthConfig sc;
  sc.count = 3180;
  sc.domain = synthetic::Domain::kTarget;
  sc.seed = 31;
  std::vector<encoding::Sample> samples;
  const std::set<std::string> kept(synthetic::target_cwes().begin(), synthetic::target_cwes().end());
  for (const auto& p : synthetic::generate(sc)) samples.push_back(encoding::encode_pair(p, kept, {}));
  // make every sample distinct so that cross-split deduplication stays out of the count
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].input.push_back("id" + std::to_string(i));

  training::SplitSpec spec;
  spec.random.seed = 3;
  const auto r = training::split(samples, spec);

  training::SplitSpec tspec;
  tspec.strategy = training::SplitSpec::Strategy::kTime;
  tspec.time = {"2016-01-01", "2018-06-15"};
  const auto t = training::split(samples, tspec);
  std::size_t want_train = 0, want_val = 0, want_test = 0;
  for (const auto& s : samples) {
    if (s.meta.date < tspec.time.val_start) {
      ++want_train;
    } else if (s.meta.date < tspec.time.test_start) {
      ++want_val;
    } else {
      ++want_test;
    }
  }
  bool honoured = true;
  for (const auto& s : t.train) honoured = honoured && s.meta.date < "2016-01-01";
  for (const auto& s : t.val) honoured = honoured && s.meta.date >= "2016-01-01" && s.meta.date < "2018-06-15";
  for (const auto& s : t.test) honoured = honoured && s.meta.date >= "2018-06-15";
  const bool ok = r.train.size() == 2226 && r.val.size() == 318 && r.test.size() == 636 && honoured &&
                  t.train.size() == want_train && t.val.size() == want_val && t.test.size() == want_test;
  report("split arithmetic", ok,
         fmt("random %zu/%zu/%zu; time %zu/%zu/%zu (expected %zu/%zu/%zu), thresholds %s", r.train.size(),
             r.val.size(), r.test.size(), t.train.size(), t.val.size(), t.test.size(), want_train, want_val,
             want_test, honoured ? "honoured" : "violated"));
}

// ---------------------------------------------------------------------------
// Desk-scale training experiments

struct Desk {
  micronet::ModelConfig model;
  training::TrainConfig source;
  training::TrainConfig target;
  synthetic::SynthConfig synth;
  std::size_t source_pairs = 5000;
  std::size_t target_pairs = 300;
  std::size_t val_cap = 100;
  std::size_t vocab_size = 200;

  Desk() {
    model.num_layers = 2;
    model.num_heads = 4;
    model.model_dim = 32;
    model.ff_dim = 64;
    model.max_positions = 256;
    source.base_lr = 3e-3;
    source.batch_size = 16;
    source.eval_interval = 200;
    source.patience = 3;
    source.max_steps = 1200;
    target = source;
    target.eval_interval = 100;
    target.patience = 2;
    target.max_steps = 600;
    synth.min_filler = 1;
    synth.max_filler = 4;
  }
};

struct Seeded {
  encoding::Vocabulary vocab;
  std::vector<mining::FunctionPair> source_pairs;
  training::Splits source, target;
};

Seeded prepare(const Desk& desk, std::uint64_t seed) {
  const std::set<std::string> kept(synthetic::target_cwes().begin(), synthetic::target_cwes().end());
  Seeded out;
  auto sc = desk.synth;
  sc.count = desk.source_pairs;
  sc.seed = 100 + seed;
  out.source_pairs = synthetic::generate(sc);
  std::vector<encoding::Sample> src;
  for (const auto& p : out.source_pairs) src.push_back(encoding::encode_pair(p, kept, {}));
  training::SplitSpec spec;
  spec.random.seed = seed;
  out.source = training::split(src, spec);
  if (out.source.val.size() > desk.val_cap) out.source.val.resize(desk.val_cap);
  std::vector<Lexemes> corpus;
  for (const auto& s : out.source.train) {
    corpus.push_back(s.input);
    corpus.push_back(s.target);
  }
  out.vocab = encoding::build_vocab(corpus, desk.vocab_size, kept);

  sc.domain = synthetic::Domain::kTarget;
  sc.count = desk.target_pairs;
  sc.seed = 200 + seed;
  std::vector<encoding::Sample> tgt;
  for (const auto& p : synthetic::generate(sc)) tgt.push_back(encoding::encode_pair(p, kept, {}));
  out.target = training::split(tgt, spec);
  return out;
}

double test_accuracy(const micronet::ModelState& m, const std::vector<encoding::Sample>& test) {
  return training::validation_accuracy(m, test, 1, 100);
}

void beam_monotonicity(const micronet::ModelState& model, const std::vector<encoding::Sample>& test) {
  const std::size_t widths[] = {1, 10, 50};
  std::map<std::size_t, std::size_t> hits;
  std::size_t nest_violations = 0;
  for (const auto& s : test) {
    std::vector<std::set<Lexemes>> sets;
    for (std::size_t w : widths) {
      std::vector<Lexemes> beam;
      for (const auto& h : inference::neural_beam(model, s.input, w, 100)) beam.push_back(h.tokens);
      hits[w] += evalrep::sequence_hit(beam, s.target);
      sets.emplace_back(beam.begin(), beam.end());
    }
    for (std::size_t k = 0; k + 1 < sets.size(); ++k) {
      nest_violations += !std::includes(sets[k + 1].begin(), sets[k + 1].end(), sets[k].begin(), sets[k].end());
    }
  }
  const auto n = static_cast<double>(test.size());
  const bool ok = hits[50] >= hits[10] && hits[10] >= hits[1] && nest_violations == 0;
  report("beam monotonicity", ok,
         fmt("accuracy %.3f (width 1) <= %.3f (10) <= %.3f (50) on %zu samples, %zu nesting violations",
             hits[1] / n, hits[10] / n, hits[50] / n, test.size(), nest_violations));
}

void training_experiments() {
  const Desk desk;
  const auto t0 = std::chrono::steady_clock::now();
  double tuned_sum = 0.0, scratch_sum = 0.0;
  std::string per_seed;
  micronet::ModelState first_tuned;
  Seeded first;
  double first_scratch = 0.0;
  for (int seed = 1; seed <= kTransferSeeds; ++seed) {
    auto data = prepare(desk, static_cast<std::uint64_t>(seed));
    auto src = desk.source, tgt = desk.target;
    src.seed = tgt.seed = static_cast<std::uint64_t>(seed);
    const auto source = training::train_source(src, desk.model, data.vocab, data.source.train, data.source.val);
    const auto tuned = training::tune_target(source.best, tgt, data.target.train, data.target.val);
    const auto scratch = training::train_source(tgt, desk.model, data.vocab, data.target.train, data.target.val);
    const double a = test_accuracy(tuned.best, data.target.test), b = test_accuracy(scratch.best, data.target.test);
    tuned_sum += a;
    scratch_sum += b;
    per_seed += fmt(" seed %d: %.3f vs %.3f;", seed, a, b);
    std::fprintf(stderr, "[transfer] seed %d source val %.3f tuned %.3f scratch %.3f (%.0fs)\n", seed,
                 source.best_metric, a, b, seconds_since(t0));
    if (seed == 1) {
      first_tuned = tuned.best;
      first_scratch = b;
      first = std::move(data);
    }
  }
  const double secs = seconds_since(t0);
  const double tuned_mean = tuned_sum / kTransferSeeds, scratch_mean = scratch_sum / kTransferSeeds;
  report("desk-scale transfer", tuned_mean - scratch_mean >= kTransferMargin && secs < kTransferSeconds,
         fmt("tuned %.3f vs scratch %.3f test sequence accuracy, mean of %d seeds (%s), %.0fs", tuned_mean,
             scratch_mean, kTransferSeeds, per_seed.substr(1, per_seed.size() - 2).c_str(), secs));

  beam_monotonicity(first_tuned, first.target.test);

  // denoising pretraining on the fixed functions of the seed-1 source corpus
  const auto t1 = std::chrono::steady_clock::now();
  std::vector<encoding::Sample> noised;
  for (std::size_t i = 0; i < first.source_pairs.size(); ++i) {
    encoding::Sample s;
    if (encoding::encode_noised(encoding::make_noise(first.source_pairs[i].after, {}, 1000 + i), {}, s)) {
      noised.push_back(std::move(s));
    }
  }
  training::SplitSpec spec;
  spec.random.seed = 1;
  auto parts = training::split(noised, spec);
  if (parts.val.size() > desk.val_cap) parts.val.resize(desk.val_cap);
  auto src = desk.source, tgt = desk.target;
  src.seed = tgt.seed = 1;
  src.val_metric = training::TrainConfig::ValMetric::kToken;
  const auto pre = training::pretrain_denoise(src, desk.model, first.vocab, parts.train, parts.val);
  const auto tuned = training::tune_target(pre.best, tgt, first.target.train, first.target.val);
  const double a = test_accuracy(tuned.best, first.target.test);
  report("denoising pipeline", a > first_scratch,
         fmt("denoise-pretrained then tuned %.3f vs scratch %.3f (seed 1, %zu noised samples, "
             "denoise val token accuracy %.3f), %.0fs",
             a, first_scratch, noised.size(), pre.best_metric, seconds_since(t1)));
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  codec_soundness();
  interpretation_oracle();
  getvalue_example();
  gradient_check();
  normalization_fuzz();
  early_stopping();
  mining_fixture();
  split_arithmetic();
  if (!quick) training_experiments();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
