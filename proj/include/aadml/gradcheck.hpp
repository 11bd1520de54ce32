#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aadml/tape.hpp"

namespace aadml {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;

  bool within(double tolerance) const { return worst < tolerance; }
};

// Compares the tape gradient of a scalar function against central finite
// differences, entry by entry. `build` must construct the graph afresh on
// the given tape, reading the parameters' current values, and must be
// deterministic (dropout disabled or seed fixed); two identical forward
// evaluations are compared to detect violations.
//
// Relative error per entry: |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Parameter* const> params, double step = 1e-3);

}  // namespace aadml
