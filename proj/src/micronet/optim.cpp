#include <cmath>

#include "vrepair/micronet.hpp"

namespace vrepair::micronet {

AdamState make_adam_state(const ModelState& state) {
  return {Parameters::zeros(state.config, state.vocab.size()), Parameters::zeros(state.config, state.vocab.size()), 0};
}

void adam_step(ModelState& state, AdamState& adam, const Gradients& grads, double lr, const AdamConfig& config) {
  std::vector<Matrix*> p, m, v;
  std::vector<const Matrix*> g;
  state.params.visit([&](const std::string&, Matrix& x) { p.push_back(&x); });
  adam.m.visit([&](const std::string&, Matrix& x) { m.push_back(&x); });
  adam.v.visit([&](const std::string&, Matrix& x) { v.push_back(&x); });
  grads.visit([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  if (p.size() != g.size() || p.size() != m.size()) throw std::invalid_argument("adam: parameter layout mismatch");

  ++adam.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!p[k]->same_shape(*g[k])) throw std::invalid_argument("adam: gradient shape mismatch");
    auto& pw = p[k]->values();
    auto& mw = m[k]->values();
    auto& vw = v[k]->values();
    const auto& gw = g[k]->values();
    for (std::size_t i = 0; i < pw.size(); ++i) {
      mw[i] = config.beta1 * mw[i] + (1.0 - config.beta1) * gw[i];
      vw[i] = config.beta2 * vw[i] + (1.0 - config.beta2) * gw[i] * gw[i];
      pw[i] -= lr * (mw[i] / c1) / (std::sqrt(vw[i] / c2) + config.epsilon);
    }
  }
  ++state.step;
}

double lr_at(std::int64_t step, double base_lr, const LrSchedule& schedule) {
  if (step < schedule.decay_start) return base_lr;
  const std::int64_t k = 1 + (step - schedule.decay_start) / schedule.decay_every;
  return base_lr * std::pow(schedule.decay, static_cast<double>(k));
}

}  // namespace vrepair::micronet
