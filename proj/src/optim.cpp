#include "nadamw/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nadamw {

void HyperParams::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("HyperParams: " + msg); };
  if (!(eta > 0.0) || !std::isfinite(eta)) fail("eta must be positive and finite");
  if (!(theta >= 0.0 && theta < 1.0)) fail("theta must lie in [0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be nonnegative and finite");
  if (!(eps > 0.0) || !std::isfinite(eps)) fail("eps must be positive and finite");
  if (lambda * eta >= 1.0) fail("lambda*eta must be < 1 (the decay factor 1-lambda*eta would not shrink)");
}

OptimizerState init_state(std::size_t d, std::vector<double> x1) {
  if (d == 0) throw std::invalid_argument("init_state: d must be >= 1");
  if (x1.size() != d)
    throw std::invalid_argument("init_state: x1 has length " + std::to_string(x1.size()) +
                                ", expected " + std::to_string(d));
  for (std::size_t i = 0; i < x1.size(); ++i)
    if (!std::isfinite(x1[i]))
      throw std::invalid_argument("init_state: x1 coordinate " + std::to_string(i) + " is not finite");
  OptimizerState s;
  s.x = std::move(x1);
  s.m.assign(d, 0.0);
  s.v.assign(d, 0.0);
  s.k = 0;
  return s;
}

void nadamw_step_inplace(OptimizerState& s, const HyperParams& hp,
                         std::span<const double> g, StepRecord* rec) {
  const std::size_t d = s.x.size();
  if (g.size() != d)
    throw std::invalid_argument("nadamw_step: gradient has length " + std::to_string(g.size()) +
                                ", state has dimension " + std::to_string(d));
  if (rec) {
    rec->m_tilde.resize(d);
    rec->update.resize(d);
    rec->ratio_max.reset();
  }
  const double decay = 1.0 - hp.lambda * hp.eta;
  double ratio_max = -1.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double gi = g[i];
    if (!std::isfinite(gi))
      throw std::invalid_argument("nadamw_step: gradient coordinate " + std::to_string(i) +
                                  " is not finite");
    const double mi = hp.theta * s.m[i] + (1.0 - hp.theta) * gi;
    const double vi = hp.beta * s.v[i] + (1.0 - hp.beta) * gi * gi;
    const double mt = hp.tau * mi + (1.0 - hp.tau) * gi;
    const double upd = -hp.eta * mt / std::sqrt(vi + hp.eps);
    const double xi = decay * s.x[i] + upd;
    if (!std::isfinite(xi))
      throw std::runtime_error("nadamw_step: iterate overflow at coordinate " + std::to_string(i));
    s.m[i] = mi;
    s.v[i] = vi;
    s.x[i] = xi;
    if (rec) {
      rec->m_tilde[i] = mt;
      rec->update[i] = upd;
      if (vi > 0.0) {
        const double r = mt * mt / vi;
        if (r > ratio_max) ratio_max = r;
      }
    }
  }
  s.k += 1;
  if (rec && ratio_max >= 0.0) rec->ratio_max = ratio_max;
}

StepResult nadamw_step(const OptimizerState& s, const HyperParams& hp,
                       std::span<const double> g) {
  StepResult r;
  r.state = s;
  nadamw_step_inplace(r.state, hp, g, &r.record);
  return r;
}

StepResult adamw_step(const OptimizerState& s, const HyperParams& hp,
                      std::span<const double> g) {
  HyperParams h = hp;
  h.tau = 1.0;
  return nadamw_step(s, h, g);
}

}  // namespace nadamw
