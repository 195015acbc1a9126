#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "serkit/autodiff.hpp"
#include "serkit/prng.hpp"

#include "support/refops.hpp"

namespace testsupport {

// Central finite differences of an independent double-precision loss,
// compared against the library's analytic gradients.
//
// The tensors in `inputs` are the graph leaves; `build_loss` wires them into
// a scalar using the ops under test, and `ref_loss` recomputes the same
// scalar in double from plain copies of the input values. Only tensors with
// requires_grad are perturbed. Relative error per coordinate is
// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero coordinates from
// blowing up the ratio while a genuinely wrong backward still fails on the
// well-scaled ones sampled alongside.
struct GradCheckResult {
  double max_rel = 0.0;
  int n_checked = 0;  // coordinates whose finite difference was trusted
  int n_skipped = 0;  // coordinates dropped by the kink guard
  std::string worst;  // "tensor[coord]" of the worst coordinate
};

// kink_rel_threshold arms a guard for losses with ReLU-style kinks: when a
// coordinate's relative error exceeds it, the difference is recomputed at
// h/2, and if the two estimates disagree by more than 1e-3 relative the
// finite difference itself is unstable there (a kink within h), so the
// coordinate is skipped instead of failing the check. Leave it infinite for
// smooth losses.
GradCheckResult check_gradients(
    const std::vector<ser::Tensor>& inputs,
    const std::function<ser::Tensor()>& build_loss,
    const std::function<double(const std::vector<refops::dvec>&)>& ref_loss,
    int coords_per_tensor, ser::Prng& coord_rng, double h = 1e-3,
    double denom_floor = 1e-6,
    double kink_rel_threshold = std::numeric_limits<double>::infinity());

}  // namespace testsupport
