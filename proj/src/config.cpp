#include "vrepair/config.hpp"

#include <fstream>
#include <set>

namespace vrepair::config {

using nlohmann::json;

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }
  Section sub(const std::string& key) { return Section(j_.at(key), where_ + "." + key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void PipelineConfig::reseed(std::uint64_t root) {
  seed = root;
  split.random.seed = root;
  train.seed = root;
}

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  Section top(j, "config");

  if (top.has("tokenizer")) top.sub("tokenizer").finish();
  if (top.has("codec")) {
    auto s = top.sub("codec");
    s.get("context_size", c.context_size);
    s.finish();
  }
  if (top.has("mining")) {
    auto s = top.sub("mining");
    if (s.has("keywords")) {
      auto k = s.sub("keywords");
      k.get("action", c.keywords.action);
      k.get("subject", c.keywords.subject);
      k.finish();
    }
    if (s.has("limits")) {
      auto l = s.sub("limits");
      l.get("max_input", c.limits.max_input);
      l.get("max_output", c.limits.max_output);
      l.finish();
    }
    s.finish();
  }
  if (top.has("encoding")) {
    auto s = top.sub("encoding");
    s.get("vocab_size", c.encoding.vocab_size);
    s.get("cwe_coverage", c.encoding.cwe_coverage);
    std::string mode = to_string(c.encoding.localization_mode);
    s.get("localization_mode", mode);
    const auto parsed = parse_localization_mode(mode);
    require(parsed.has_value(), "config.encoding.localization_mode: unknown mode '" + mode + "'");
    c.encoding.localization_mode = *parsed;
    if (s.has("noise")) {
      auto n = s.sub("noise");
      n.get("mask_ratio", c.encoding.noise.mask_ratio);
      n.get("delete_ratio", c.encoding.noise.delete_ratio);
      n.get("infill_lambda", c.encoding.noise.infill_lambda);
      n.get("infill_spans", c.encoding.noise.infill_spans);
      n.finish();
    }
    s.finish();
  }
  if (top.has("model")) {
    auto s = top.sub("model");
    s.get("num_layers", c.model.num_layers);
    s.get("num_heads", c.model.num_heads);
    s.get("model_dim", c.model.model_dim);
    s.get("ff_dim", c.model.ff_dim);
    s.get("dropout", c.model.dropout);
    s.get("label_smoothing", c.model.label_smoothing);
    s.get("max_positions", c.model.max_positions);
    s.finish();
  }
  if (top.has("train")) {
    auto s = top.sub("train");
    s.get("base_lr", c.train.base_lr);
    s.get("batch_size", c.train.batch_size);
    s.get("eval_interval", c.train.eval_interval);
    s.get("patience", c.train.patience);
    s.get("max_steps", c.train.max_steps);
    s.get("target_lr_factor", c.train.target_lr_factor);
    s.get("eval_beam", c.train.eval_beam);
    s.get("max_decode_len", c.train.max_decode_len);
    std::string metric = c.train.val_metric == training::TrainConfig::ValMetric::kToken ? "token" : "sequence";
    s.get("val_metric", metric);
    require(metric == "sequence" || metric == "token", "config.train.val_metric: expected sequence or token");
    c.train.val_metric =
        metric == "token" ? training::TrainConfig::ValMetric::kToken : training::TrainConfig::ValMetric::kSequence;
    if (s.has("schedule")) {
      auto d = s.sub("schedule");
      d.get("decay_start", c.train.schedule.decay_start);
      d.get("decay_every", c.train.schedule.decay_every);
      d.get("decay", c.train.schedule.decay);
      d.finish();
    }
    s.finish();
  }
  if (top.has("split")) {
    auto s = top.sub("split");
    std::string strategy = "random";
    s.get("strategy", strategy);
    require(strategy == "random" || strategy == "time", "config.split.strategy: expected random or time");
    c.split.strategy = strategy == "time" ? training::SplitSpec::Strategy::kTime : training::SplitSpec::Strategy::kRandom;
    s.get("train", c.split.random.train);
    s.get("val", c.split.random.val);
    s.get("test", c.split.random.test);
    s.get("val_start", c.split.time.val_start);
    s.get("test_start", c.split.time.test_start);
    s.finish();
  }
  if (top.has("infer")) {
    auto s = top.sub("infer");
    s.get("beam_width", c.infer.beam_width);
    s.get("max_len", c.infer.max_len);
    s.finish();
  }
  std::uint64_t seed = 0;
  top.get("seed", seed);
  top.finish();
  c.reseed(seed);

  require(c.context_size >= 1, "config.codec.context_size must be positive");
  require(c.limits.max_input > 0 && c.limits.max_output > 0, "config.mining.limits must be positive");
  c.limits.context_size = c.context_size;
  c.limits.mode = c.encoding.localization_mode;
  require(c.encoding.vocab_size > 0, "config.encoding.vocab_size must be positive");
  require(c.encoding.cwe_coverage > 0.0 && c.encoding.cwe_coverage <= 1.0,
          "config.encoding.cwe_coverage must be in (0, 1]");
  const auto& n = c.encoding.noise;
  require(n.mask_ratio >= 0.0 && n.mask_ratio <= 1.0 && n.delete_ratio >= 0.0 && n.delete_ratio <= 1.0 &&
              n.infill_lambda >= 0.0 && n.infill_spans >= 0,
          "config.encoding.noise: ratios must be in [0, 1]");
  require(c.infer.beam_width > 0 && c.infer.max_len > 0, "config.infer: beam_width and max_len must be positive");
  try {
    c.model.validate();
    c.train.validate();
    c.split.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const PipelineConfig& c) {
  const auto& t = c.train;
  const bool time = c.split.strategy == training::SplitSpec::Strategy::kTime;
  return {
      {"tokenizer", json::object()},
      {"codec", {{"context_size", c.context_size}}},
      {"mining",
       {{"keywords", {{"action", c.keywords.action}, {"subject", c.keywords.subject}}},
        {"limits", {{"max_input", c.limits.max_input}, {"max_output", c.limits.max_output}}}}},
      {"encoding",
       {{"vocab_size", c.encoding.vocab_size},
        {"cwe_coverage", c.encoding.cwe_coverage},
        {"localization_mode", to_string(c.encoding.localization_mode)},
        {"noise",
         {{"mask_ratio", c.encoding.noise.mask_ratio},
          {"delete_ratio", c.encoding.noise.delete_ratio},
          {"infill_lambda", c.encoding.noise.infill_lambda},
          {"infill_spans", c.encoding.noise.infill_spans}}}}},
      {"model",
       {{"num_layers", c.model.num_layers},
        {"num_heads", c.model.num_heads},
        {"model_dim", c.model.model_dim},
        {"ff_dim", c.model.ff_dim},
        {"dropout", c.model.dropout},
        {"label_smoothing", c.model.label_smoothing},
        {"max_positions", c.model.max_positions}}},
      {"train",
       {{"base_lr", t.base_lr},
        {"batch_size", t.batch_size},
        {"eval_interval", t.eval_interval},
        {"patience", t.patience},
        {"max_steps", t.max_steps},
        {"target_lr_factor", t.target_lr_factor},
        {"eval_beam", t.eval_beam},
        {"max_decode_len", t.max_decode_len},
        {"val_metric", t.val_metric == training::TrainConfig::ValMetric::kToken ? "token" : "sequence"},
        {"schedule",
         {{"decay_start", t.schedule.decay_start},
          {"decay_every", t.schedule.decay_every},
          {"decay", t.schedule.decay}}}}},
      {"split",
       {{"strategy", time ? "time" : "random"},
        {"train", c.split.random.train},
        {"val", c.split.random.val},
        {"test", c.split.random.test},
        {"val_start", c.split.time.val_start},
        {"test_start", c.split.time.test_start}}},
      {"infer", {{"beam_width", c.infer.beam_width}, {"max_len", c.infer.max_len}}},
      {"seed", c.seed},
  };
}

}  // namespace vrepair::config
