// vrepair: file-based pipeline driver.
//
//   mine → encode → split → train / tune / pretrain-denoise → predict → eval
//
// Exit codes: 0 ok, 2 bad flags or config, 3 bad input data, 4 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "vrepair/config.hpp"
#include "vrepair/diffcodec.hpp"
#include "vrepair/encoding.hpp"
#include "vrepair/evalrep.hpp"
#include "vrepair/inference.hpp"
#include "vrepair/io.hpp"
#include "vrepair/micronet.hpp"
#include "vrepair/mining.hpp"
#include "vrepair/synthetic.hpp"
#include "vrepair/training.hpp"

using namespace vrepair;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfigError = 2, kDataError = 3, kRuntimeError = 4 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  config::PipelineConfig load() const {
    auto c = config_path.empty() ? config::parse_config(json::object()) : config::load_config(config_path);
    if (seed) c.reseed(*seed);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "root seed; overrides the config");
}

std::string sample_id(const encoding::Sample& s, std::size_t index) {
  return s.meta.id.empty() ? std::to_string(index) : s.meta.id;
}

std::vector<encoding::Sample> read_samples(const std::string& path) {
  return io::read_records<encoding::Sample>(path, io::sample_from_json);
}

void write_samples(const std::string& path, const std::vector<encoding::Sample>& samples) {
  std::vector<json> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(io::to_json(s));
  io::write_jsonl(path, out);
}

encoding::Vocabulary read_vocab(const std::string& path) {
  try {
    return encoding::Vocabulary::load(path);
  } catch (const std::exception& e) {
    throw io::DataError(path, 0, e.what());
  }
}

micronet::ModelState read_checkpoint(const std::string& path) {
  try {
    return micronet::load_checkpoint(path);
  } catch (const std::exception& e) {
    throw io::DataError(path, 0, e.what());
  }
}

// Splits a space-joined diff back into lexemes. Runs of ordinary words are
// relexed so that literals containing spaces survive.
Lexemes read_diff_text(const std::string& text) {
  static const std::set<std::string> kMarkers = {diffcodec::kModStart, diffcodec::kModEnd,
                                                 diffcodec::kBeginOfFunction, diffcodec::kEndOfFunction};
  Lexemes out;
  std::string run;
  auto flush = [&] {
    for (const auto& t : ctok::tokenize(run).tokens) out.push_back(t.text);
    run.clear();
  };
  std::istringstream in(text);
  for (std::string word; in >> word;) {
    if (kMarkers.count(word)) {
      flush();
      out.push_back(word);
    } else {
      run += word + ' ';
    }
  }
  flush();
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::DataError(path, 0, "cannot open");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

training::LogSink log_to(std::ofstream& out) {
  return [&out](const training::LogEntry& e) {
    training::write_log_line(out, e);
    out.flush();
    std::fprintf(stderr, "step %lld  loss %.4f  val %.4f  lr %.2e\n", static_cast<long long>(e.step), e.train_loss,
                 e.val_metric, e.lr);
  };
}

void report_run(const training::TrainResult& r) {
  std::printf("steps %lld  best val %.4f%s%s\n", static_cast<long long>(r.steps), r.best_metric,
              r.stopped_early ? "  (stopped early)" : "", r.diverged ? "  (diverged)" : "");
}

// ---------------------------------------------------------------------------

int cmd_mine(const Common& common, const std::string& in, const std::string& out) {
  const auto c = common.load();
  const auto commits = io::read_records<mining::CommitRecord>(in, io::commit_from_json);
  mining::MineStats st;
  const auto pairs = mining::mine(commits, c.keywords, c.limits, &st);
  std::vector<json> records;
  for (const auto& p : pairs) records.push_back(io::to_json(p));
  io::write_jsonl(out, records);
  std::printf("commits %zu\nbugfix %zu\nc_files %zu\nfunction_pairs %zu\nafter_dedup %zu\nafter_length_filter %zu\n",
              st.commits, st.bugfix_commits, st.c_commits, st.function_pairs, st.after_dedup,
              st.after_length_filter);
  return kOk;
}

struct EncodeArgs {
  std::string pairs, out, vocab_out, vocab_in, mode, cwes;
  bool noise = false;
};

int cmd_encode(const Common& common, const EncodeArgs& a) {
  auto c = common.load();
  if (!a.mode.empty()) {
    const auto m = parse_localization_mode(a.mode);
    if (!m) throw config::ConfigError("unknown localization mode '" + a.mode + "'");
    c.encoding.localization_mode = *m;
  }
  const auto pairs = io::read_records<mining::FunctionPair>(a.pairs, io::pair_from_json);
  std::set<std::string> kept;
  if (!a.cwes.empty()) {
    std::istringstream s(a.cwes);
    for (std::string id; std::getline(s, id, ',');) {
      if (!id.empty()) kept.insert(encoding::normalize_cwe(id));
    }
  } else {
    std::vector<std::string> ids;
    for (const auto& p : pairs) {
      if (p.meta) ids.push_back(p.meta->cwe_id);
    }
    kept = encoding::build_cwe_kept_set(ids, c.encoding.cwe_coverage);
  }
  const encoding::EncodeOptions opts{c.context_size, c.encoding.localization_mode};

  std::vector<encoding::Sample> samples;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    encoding::Sample s;
    try {
      if (a.noise) {
        const auto noised = encoding::make_noise(pairs[i].after, c.encoding.noise, c.seed * 1000003ULL + i);
        if (!encoding::encode_noised(noised, opts, s)) {
          ++skipped;
          continue;
        }
      } else {
        s = encoding::encode_pair(pairs[i], kept, opts);
      }
    } catch (const encoding::LocalizationError&) {
      ++skipped;
      continue;
    } catch (const std::invalid_argument&) {
      ++skipped;
      continue;
    }
    s.meta.id = std::to_string(i);
    samples.push_back(std::move(s));
  }
  write_samples(a.out, samples);

  if (!a.vocab_out.empty()) {
    encoding::Vocabulary vocab;
    if (!a.vocab_in.empty()) {
      vocab = read_vocab(a.vocab_in);
    } else {
      std::vector<Lexemes> corpus;
      for (const auto& s : samples) {
        corpus.push_back(s.input);
        corpus.push_back(s.target);
      }
      vocab = encoding::build_vocab(corpus, c.encoding.vocab_size, kept);
    }
    vocab.save(a.vocab_out);
    std::printf("vocabulary %zu\n", vocab.size());
  }
  std::printf("pairs %zu\nsamples %zu\nskipped %zu\nkept_cwes %zu\n", pairs.size(), samples.size(), skipped,
              kept.size());
  return kOk;
}

int cmd_split(const Common& common, const std::string& in, const std::string& dir) {
  const auto c = common.load();
  auto parts = training::split(read_samples(in), c.split);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io::DataError(dir, 0, ec.message());
  for (auto* part : {&parts.train, &parts.val, &parts.test}) {
    const char* name = part == &parts.train ? "train" : part == &parts.val ? "val" : "test";
    for (auto& s : *part) s.meta.split = name;
    write_samples(dir + "/" + name + ".jsonl", *part);
  }
  std::printf("train %zu\nval %zu\ntest %zu\n", parts.train.size(), parts.val.size(), parts.test.size());
  return kOk;
}

int cmd_synth(const Common& common, const std::string& domain, std::size_t count, const std::string& out) {
  const auto c = common.load();
  synthetic::SynthConfig sc;
  sc.count = count;
  sc.domain = domain == "target" ? synthetic::Domain::kTarget : synthetic::Domain::kSource;
  sc.seed = c.seed;
  std::vector<json> records;
  for (const auto& p : synthetic::generate(sc)) records.push_back(io::to_json(p));
  io::write_jsonl(out, records);
  std::printf("pairs %zu\n", records.size());
  return kOk;
}

struct TrainArgs {
  std::string samples, val, vocab, checkpoint_in, checkpoint_out, log;
};

int cmd_train(const Common& common, const TrainArgs& a, const std::string& phase) {
  const auto c = common.load();
  const auto train = read_samples(a.samples);
  const auto val = read_samples(a.val);
  std::ofstream log(a.log.empty() ? a.checkpoint_out + ".log.jsonl" : a.log);
  if (!log) throw io::DataError(a.log, 0, "cannot write");
  training::TrainResult r;
  if (phase == "tune") {
    std::optional<encoding::Vocabulary> vocab;
    if (!a.vocab.empty()) vocab = read_vocab(a.vocab);
    r = training::tune_target(read_checkpoint(a.checkpoint_in), c.train, train, val, vocab, log_to(log));
  } else {
    const auto vocab = read_vocab(a.vocab);
    r = phase == "train" ? training::train_source(c.train, c.model, vocab, train, val, log_to(log))
                         : training::pretrain_denoise(c.train, c.model, vocab, train, val, log_to(log));
  }
  micronet::save_checkpoint(r.best, a.checkpoint_out);
  report_run(r);
  return kOk;
}

int cmd_predict(const Common& common, const std::string& ckpt, const std::string& in, const std::string& out,
                std::optional<std::size_t> beam) {
  const auto c = common.load();
  const auto state = read_checkpoint(ckpt);
  const auto samples = read_samples(in);
  const std::size_t width = beam.value_or(c.infer.beam_width);
  std::vector<json> records(samples.size());
  vrepair::detail::parallel_for(samples.size(), [&](std::size_t i) {
    const auto p = inference::predict_encoded(state, samples[i].input, width, c.context_size, c.infer.max_len);
    records[i] = io::to_json(p, sample_id(samples[i], i));
  });
  io::write_jsonl(out, records);
  std::printf("predictions %zu\n", records.size());
  return kOk;
}

int cmd_eval(const Common& common, const std::string& preds_path, const std::string& golds_path,
             const std::string& out, const std::string& csv) {
  const auto c = common.load();
  const auto preds = io::read_records<io::PredictionRecord>(preds_path, io::prediction_from_json);
  const auto golds = read_samples(golds_path);
  std::map<std::string, const io::PredictionRecord*> by_id;
  std::size_t width = 0;
  for (const auto& p : preds) {
    by_id[p.input_id] = &p;
    width = std::max(width, p.hypotheses.size());
  }
  std::vector<evalrep::SampleResult> results;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto& g = golds[i];
    const auto it = by_id.find(sample_id(g, i));
    if (it == by_id.end()) throw io::DataError(preds_path, 0, "no prediction for input " + sample_id(g, i));
    std::vector<Lexemes> beam;
    for (const auto& h : it->second->hypotheses) beam.push_back(h.tokens);
    const bool seq = evalrep::sequence_hit(beam, g.target);
    const auto& cands = it->second->candidates;
    const bool patch = !g.fixed.empty() && std::find(cands.begin(), cands.end(), g.fixed) != cands.end();
    results.push_back({g.cwe_token, seq, patch});
  }
  const std::string split = golds.empty() ? "" : golds.front().meta.split;
  const auto rep = evalrep::per_cwe_report(results, width ? width : c.infer.beam_width, split);
  std::ofstream o(out);
  if (!o) throw io::DataError(out, 0, "cannot write");
  o << evalrep::to_json(rep).dump(2) << '\n';
  if (!csv.empty()) {
    std::ofstream s(csv);
    s << evalrep::to_csv(rep);
  }
  std::printf("%s", evalrep::to_table(rep).c_str());
  return kOk;
}

int cmd_apply(const std::string& function_path, const std::string& diff_path, int context) {
  const auto function = ctok::tokenize(read_file(function_path)).lexemes();
  const auto diff = diffcodec::parse_diff(read_diff_text(read_file(diff_path)), context);
  std::vector<Lexemes> programs;
  try {
    programs = diffcodec::enumerate_applications(function, diff, diffcodec::kUnbounded);
  } catch (const diffcodec::NoInterpretation&) {
  }
  std::printf("interpretations %zu\n", programs.size());
  for (std::size_t i = 0; i < programs.size(); ++i) {
    std::printf("=== %zu ===\n%s\n", i + 1, ctok::detokenize(programs[i]).c_str());
  }
  return programs.empty() ? kDataError : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vulnerability repair pipeline"};
  app.require_subcommand(1);
  Common common;

  std::string in, out, dir;
  auto* mine = app.add_subcommand("mine", "extract function pairs from bug-fix commits");
  mine->add_option("--commits", in, "commits.jsonl")->required();
  mine->add_option("--out", out, "pairs.jsonl")->required();
  add_common(mine, common);

  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "turn function pairs into model samples");
  encode->add_option("--pairs", enc.pairs, "pairs.jsonl")->required();
  encode->add_option("--out", enc.out, "samples.jsonl")->required();
  encode->add_option("--vocab-out", enc.vocab_out, "vocabulary to write");
  encode->add_option("--vocab-in", enc.vocab_in, "reuse this vocabulary instead of building one");
  encode->add_option("--mode", enc.mode, "first_line, none, all_lines or single_block");
  encode->add_option("--cwes", enc.cwes, "comma-separated CWE ids to keep (default: by coverage)");
  encode->add_flag("--noise", enc.noise, "denoising samples from the fixed functions");
  add_common(encode, common);

  auto* split = app.add_subcommand("split", "train/val/test split of a samples file");
  split->add_option("--samples", in, "samples.jsonl")->required();
  split->add_option("--out-dir", dir, "writes train.jsonl, val.jsonl, test.jsonl")->required();
  add_common(split, common);

  std::string domain = "source";
  std::size_t count = 5000;
  auto* synth = app.add_subcommand("synth", "generate synthetic function pairs");
  synth->add_option("--domain", domain, "source or target")->check(CLI::IsMember({"source", "target"}));
  synth->add_option("--count", count, "number of pairs");
  synth->add_option("--out", out, "pairs.jsonl")->required();
  add_common(synth, common);

  TrainArgs tr;
  std::map<std::string, CLI::App*> phases;
  for (const char* name : {"train", "tune", "pretrain-denoise"}) {
    auto* cmd = app.add_subcommand(name, std::string(name) + " phase");
    cmd->add_option("--samples", tr.samples, "training samples")->required();
    cmd->add_option("--val", tr.val, "validation samples")->required();
    cmd->add_option("--vocab", tr.vocab, "vocabulary file");
    cmd->add_option("--checkpoint-out", tr.checkpoint_out, "checkpoint to write")->required();
    cmd->add_option("--log", tr.log, "run log (default: <checkpoint-out>.log.jsonl)");
    if (std::string(name) == "tune") {
      cmd->add_option("--checkpoint-in", tr.checkpoint_in, "source checkpoint")->required();
    } else {
      cmd->get_option("--vocab")->required();
    }
    add_common(cmd, common);
    phases[name] = cmd;
  }

  std::string ckpt;
  std::optional<std::size_t> beam;
  auto* predict = app.add_subcommand("predict", "beam search over encoded samples");
  predict->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  predict->add_option("--samples", in, "samples.jsonl")->required();
  predict->add_option("--out", out, "preds.jsonl")->required();
  predict->add_option("--beam", beam, "beam width (default: config)");
  add_common(predict, common);

  std::string golds, csv;
  auto* eval = app.add_subcommand("eval", "score predictions");
  eval->add_option("--preds", in, "preds.jsonl")->required();
  eval->add_option("--golds", golds, "samples.jsonl")->required();
  eval->add_option("--out", out, "report.json")->required();
  eval->add_option("--csv", csv, "per-CWE table as CSV");
  add_common(eval, common);

  std::string function, diff;
  int context = 3;
  auto* apply = app.add_subcommand("apply", "print every program a diff can produce");
  apply->add_option("--function", function, "C source of one function")->required();
  apply->add_option("--diff", diff, "serialized diff")->required();
  apply->add_option("--context", context, "context size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*mine) return cmd_mine(common, in, out);
    if (*encode) return cmd_encode(common, enc);
    if (*split) return cmd_split(common, in, dir);
    if (*synth) return cmd_synth(common, domain, count, out);
    for (const auto& [name, cmd] : phases) {
      if (*cmd) return cmd_train(common, tr, name);
    }
    if (*predict) return cmd_predict(common, ckpt, in, out, beam);
    if (*eval) return cmd_eval(common, in, golds, out, csv);
    if (*apply) return cmd_apply(function, diff, context);
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const diffcodec::MalformedDiff& e) {
    std::fprintf(stderr, "MalformedDiff: %s\n", e.what());
    return kDataError;
  } catch (const training::VocabularyMismatch& e) {
    std::fprintf(stderr, "VocabularyMismatch: %s\n", e.what());
    return kDataError;
  } catch (const io::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const ctok::LexError& e) {
    std::fprintf(stderr, "lex error: %s\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return kRuntimeError;
}
