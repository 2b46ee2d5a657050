#include "stgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stgcn/ops.hpp"

namespace stgcn {

namespace {

double projected(const Tensor& out, const Tensor& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * weights[i];
  return acc;
}

Tensor evaluate(const OutputBuilder& build, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return build(tape, vars).value();
}

}  // namespace

GradCheckReport check_gradients(const std::string& name, const OutputBuilder& build,
                                std::vector<Tensor> params, const GradCheckOptions& opts,
                                std::uint64_t projection_seed) {
  std::vector<Tensor> analytic;
  Tensor weights;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    const Var out = build(tape, vars);
    weights = Tensor(out.value().shape());
    std::mt19937_64 rng(projection_seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& w : weights.data()) w = dist(rng);
    const Var loss = ops::sum(ops::mul(out, tape.constant(weights)));
    const Gradients grads = tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(grads[v]);
  }

  const double centre = projected(evaluate(build, params), weights);
  GradCheckReport report;
  report.name = name;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const float original = params[p][i];
      const float up = original + opts.step;
      const float down = original - opts.step;
      params[p][i] = up;
      const double loss_up = projected(evaluate(build, params), weights);
      params[p][i] = down;
      const double loss_down = projected(evaluate(build, params), weights);
      params[p][i] = original;

      // Divide by the step actually representable in float.
      const double numeric = (loss_up - loss_down) / (static_cast<double>(up) - static_cast<double>(down));
      const double forward = (loss_up - centre) / (static_cast<double>(up) - original);
      const double backward = (centre - loss_down) / (original - static_cast<double>(down));
      const double one_sided_gap = std::fabs(forward - backward);
      if (one_sided_gap > opts.abs_tol + opts.rel_tol * std::max(std::fabs(forward), std::fabs(backward))) {
        ++report.kinks;
      }
      const double exact = analytic[p][i];
      const double abs_err = std::fabs(numeric - exact);
      const double scale = std::max(std::fabs(numeric), std::fabs(exact));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;

      ++report.coordinates;
      report.worst_abs = std::max(report.worst_abs, abs_err);
      if (rel_err <= opts.rel_tol) {
        ++report.within_rel;
      } else if (abs_err <= opts.abs_tol) {
        ++report.within_abs_only;
      } else {
        ++report.failures;
      }
    }
  }
  const double fraction =
      report.coordinates ? static_cast<double>(report.within_rel) / static_cast<double>(report.coordinates) : 1.0;
  report.passed = report.failures == 0 && fraction >= opts.min_rel_fraction;
  return report;
}

}  // namespace stgcn
