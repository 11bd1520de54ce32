#include "aadml/gradcheck.hpp"

#include <cmath>

#include "aadml/error.hpp"

namespace aadml {

namespace {

double evaluate(const std::function<Var(Tape&)>& build) {
  Tape tape;
  Var out = build(tape);
  return tape.value(out).scalar_value();
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Parameter* const> params, double step) {
  if (evaluate(build) != evaluate(build)) {
    throw Error("grad_check: function is not deterministic (two forward evaluations differ)");
  }

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = build(tape);
    tape.backward(out);
  }

  GradCheckReport report;
  for (Parameter* p : params) {
    double max_rel = 0.0;
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + step;
      const double up = evaluate(build);
      p->value.data[i] = saved - step;
      const double down = evaluate(build);
      p->value.data[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad.data[i];
      const double rel = std::abs(analytic - numeric) /
                         (std::abs(analytic) + std::abs(numeric) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
    report.entries.push_back({p->name, max_rel});
    report.worst = std::max(report.worst, max_rel);
  }
  return report;
}

}  // namespace aadml
