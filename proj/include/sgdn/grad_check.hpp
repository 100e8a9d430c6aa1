#pragma once

// Finite-difference gradient checks over a registry of differentiable ops,
// layers and the full model.
//
// Each case is a scalar function of some leaf matrices and, optionally, the
// parameters of a private store. Analytic gradients come from the tape;
// numeric ones from central differences. Values that enter the graph as
// constants (stop-gradient boxes, positions, targets) are recorded on the
// reference pass and replayed on every perturbed pass, so the numeric
// derivative has the same stop-gradient semantics as the analytic one.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgdn/nn.hpp"

namespace sgdn {

struct CheckCase {
  std::vector<Matrix> inputs;
  std::shared_ptr<ParameterStore> params;  // may be null
  std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)> loss;
};

using CaseBuilder = std::function<CheckCase(Rng&)>;

struct RegisteredCheck {
  std::string id;
  bool end_to_end = false;
  CaseBuilder build;
};

const std::vector<RegisteredCheck>& grad_check_registry();
// A scaling op whose backward pass is off by 10%; must fail.
CheckCase corrupted_case(Rng& rng);

struct GradCheckOptions {
  Real epsilon = 1e-5;
  // Entries sampled per tensor; tensors with fewer entries are checked in
  // full.
  int max_entries_per_tensor = 24;
};

// Central differences at eps = 1e-5 carry about 1e-10 of round-off per entry
// for O(1) losses, so gradients much smaller than this floor cannot be
// judged relatively; exactly-zero gradients (a key bias under softmax)
// only ever show that noise.
inline constexpr Real kRelativeErrorFloor = 1e-5;

// ||a - n|| / max(||a|| + ||n||, kRelativeErrorFloor) over the checked
// entries.
Real relative_error(const Matrix& analytic, const Matrix& numeric);

// Largest per-tensor relative error of one case.
Real max_relative_error(const CheckCase& c, Rng& rng, const GradCheckOptions& options = {});

struct GradCheckReport {
  std::string op;
  int trials = 0;
  Real max_rel_error = 0.0;
  Real tolerance = 0.0;
  bool passed = false;
};

// Runs `trials` random cases. Throws CheckFailed when the worst error
// exceeds the tolerance.
GradCheckReport gradient_check(std::string_view op_id, int trials, Real tolerance, std::uint64_t seed = 7,
                               const GradCheckOptions& options = {});
GradCheckReport gradient_check(std::string_view label, const CaseBuilder& build, int trials, Real tolerance,
                               std::uint64_t seed = 7, const GradCheckOptions& options = {});

}  // namespace sgdn
