#include "vrepair/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "vrepair/diffcodec.hpp"
#include "vrepair/encoding.hpp"

namespace vrepair::inference {

namespace {

class MicronetSession : public Session {
 public:
  MicronetSession(const micronet::IncrementalDecoder& decoder) : decoder_(&decoder), cache_(decoder.start()) {
    step_ = decoder.step(cache_, encoding::Vocabulary::kBos);
  }

  std::unique_ptr<Session> clone() const override { return std::make_unique<MicronetSession>(*this); }

  std::vector<double> next_log_probs() const override {
    auto p = decoder_->extended().fold(step_);
    for (double& v : p) v = std::log(v);
    return p;
  }

  void push(std::size_t symbol) override { step_ = decoder_->step(cache_, decoder_->extended().input_id(symbol)); }

 private:
  const micronet::IncrementalDecoder* decoder_;
  micronet::IncrementalDecoder::Cache cache_;
  micronet::StepDistribution step_;
};

struct Open {
  std::vector<std::size_t> symbols;
  double log_prob;
  std::unique_ptr<Session> session;
};

struct Expansion {
  double log_prob;
  std::size_t parent;
  std::size_t symbol;
};

Hypothesis to_hypothesis(const SequenceModel& model, const std::vector<std::size_t>& symbols, double lp, bool done) {
  Hypothesis h;
  for (std::size_t s : symbols) h.tokens.push_back(model.lexeme(s));
  h.log_prob = lp;
  h.finished = done;
  return h;
}

}  // namespace

MicronetModel::MicronetModel(const micronet::ModelState& state, const Lexemes& input) : decoder_(state, input) {}

std::unique_ptr<Session> MicronetModel::start() const { return std::make_unique<MicronetSession>(decoder_); }

std::vector<Hypothesis> neural_beam(const SequenceModel& model, std::size_t width, std::size_t max_len) {
  if (width == 0) throw std::invalid_argument("beam width must be at least 1");
  std::vector<Hypothesis> done;
  std::vector<Open> open;
  open.push_back({{}, 0.0, model.start()});
  const std::size_t eos = model.end_symbol();

  for (std::size_t len = 1; len <= max_len && !open.empty(); ++len) {
    std::vector<Expansion> cand;
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto lp = open[i].session->next_log_probs();
      for (std::size_t s = 0; s < lp.size(); ++s) {
        if (lp[s] == -std::numeric_limits<double>::infinity()) continue;
        cand.push_back({open[i].log_prob + lp[s], i, s});
      }
    }
    // ties resolve on (parent, symbol) so the order is reproducible
    const std::size_t keep = std::min(width, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                      [](const Expansion& a, const Expansion& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.symbol < b.symbol;
                      });
    cand.resize(keep);

    std::vector<Open> next;
    for (const auto& c : cand) {
      auto symbols = open[c.parent].symbols;
      if (c.symbol == eos) {
        done.push_back(to_hypothesis(model, symbols, c.log_prob, true));
        continue;
      }
      symbols.push_back(c.symbol);
      if (len == max_len) {
        done.push_back(to_hypothesis(model, symbols, c.log_prob, false));
        continue;
      }
      auto session = open[c.parent].session->clone();
      session->push(c.symbol);
      next.push_back({std::move(symbols), c.log_prob, std::move(session)});
    }
    open = std::move(next);

    // open scores only fall, so they cannot overtake a full finished list
    if (done.size() >= width && !open.empty()) {
      std::vector<double> scores;
      for (const auto& h : done) scores.push_back(h.log_prob);
      std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(width - 1), scores.end(),
                       std::greater<>());
      const double bar = scores[width - 1];
      double best_open = -std::numeric_limits<double>::infinity();
      for (const auto& o : open) best_open = std::max(best_open, o.log_prob);
      if (best_open <= bar) open.clear();
    }
  }

  std::stable_sort(done.begin(), done.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
  if (done.size() > width) done.resize(width);
  return done;
}

std::vector<Hypothesis> neural_beam(const micronet::ModelState& state, const Lexemes& input, std::size_t width,
                                    std::size_t max_len) {
  const MicronetModel model(state, input);
  const auto limit = static_cast<std::size_t>(state.config.max_positions) - 1;
  return neural_beam(model, width, std::min(max_len, limit));
}

std::vector<PatchCandidate> combine(const Lexemes& function, const std::vector<Hypothesis>& hypotheses,
                                    int context_size, std::size_t width) {
  std::vector<PatchCandidate> out;
  std::set<Lexemes> seen;
  for (std::size_t h = 0; h < hypotheses.size() && out.size() < width; ++h) {
    std::vector<Lexemes> patched;
    try {
      const auto diff = diffcodec::parse_diff(hypotheses[h].tokens, context_size);
      patched = diffcodec::enumerate_applications(function, diff, width);
    } catch (const diffcodec::MalformedDiff&) {
      continue;
    } catch (const diffcodec::NoInterpretation&) {
      continue;
    }
    for (std::size_t k = 0; k < patched.size() && out.size() < width; ++k) {
      if (patched[k] == function || !seen.insert(patched[k]).second) continue;
      out.push_back({std::move(patched[k]), h, k, hypotheses[h].log_prob});
    }
  }
  return out;
}

Prediction predict_encoded(const micronet::ModelState& state, const Lexemes& encoded_input, std::size_t width,
                           int context_size, std::size_t max_len) {
  Prediction p;
  p.hypotheses = neural_beam(state, encoded_input, width, max_len);
  p.candidates = combine(encoding::strip_input(encoded_input), p.hypotheses, context_size, width);
  return p;
}

Prediction vrepair_beam(const micronet::ModelState& state, const ctok::TokenStream& function,
                        const std::vector<int>& vuln_lines, const std::string& cwe_token, std::size_t width,
                        int context_size, LocalizationMode mode) {
  const auto input = encoding::build_input(function, vuln_lines, cwe_token, mode);
  return predict_encoded(state, input, width, context_size);
}

}  // namespace vrepair::inference
