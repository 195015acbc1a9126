#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace testsupport {

GradCheckResult check_gradients(
    const std::vector<ser::Tensor>& inputs,
    const std::function<ser::Tensor()>& build_loss,
    const std::function<double(const std::vector<refops::dvec>&)>& ref_loss,
    int coords_per_tensor, ser::Prng& coord_rng, double h, double denom_floor,
    double kink_rel_threshold) {
  // backward accumulates, so stale gradients from an earlier check on the
  // same tensors must go first. Copies share the underlying node.
  for (ser::Tensor input : inputs) {
    input.zero_grad();
  }
  ser::Tensor loss = build_loss();
  ser::backward(loss);

  std::vector<refops::dvec> base(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto vals = inputs[i].values();
    base[i].assign(vals.begin(), vals.end());
  }

  // Sanity: the reference must agree with the implementation's forward,
  // otherwise the finite differences would be probing a different function.
  {
    const double ref0 = ref_loss(base);
    const double impl0 = static_cast<double>(loss.item());
    const double diff = std::abs(ref0 - impl0);
    if (diff > 1e-3 * std::max({1.0, std::abs(ref0), std::abs(impl0)})) {
      throw std::logic_error("gradcheck: reference forward disagrees with the "
                             "implementation (" +
                             std::to_string(impl0) + " vs " +
                             std::to_string(ref0) + ")");
    }
  }

  GradCheckResult result;
  std::vector<refops::dvec> probe = base;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) {
      continue;
    }
    const auto grad = inputs[i].grad();
    const size_t numel = base[i].size();

    std::vector<size_t> coords;
    if (numel <= static_cast<size_t>(coords_per_tensor)) {
      coords.resize(numel);
      for (size_t k = 0; k < numel; ++k) {
        coords[k] = k;
      }
    } else {
      // Sample without replacement so a repeated coordinate does not eat
      // into the quota.
      std::vector<size_t> all(numel);
      for (size_t k = 0; k < numel; ++k) {
        all[k] = k;
      }
      for (int k = 0; k < coords_per_tensor; ++k) {
        const size_t j =
            k + static_cast<size_t>(coord_rng.uniform_below(numel - k));
        std::swap(all[static_cast<size_t>(k)], all[j]);
        coords.push_back(all[static_cast<size_t>(k)]);
      }
    }

    const auto central_diff = [&](size_t k, double step) {
      const double saved = probe[i][k];
      probe[i][k] = saved + step;
      const double f_plus = ref_loss(probe);
      probe[i][k] = saved - step;
      const double f_minus = ref_loss(probe);
      probe[i][k] = saved;
      return (f_plus - f_minus) / (2.0 * step);
    };

    for (size_t k : coords) {
      const double numeric = central_diff(k, h);
      const double analytic =
          grad.empty() ? 0.0 : static_cast<double>(grad[k]);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), denom_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > kink_rel_threshold) {
        const double half = central_diff(k, h / 2.0);
        const double fd_gap =
            std::abs(half - numeric) /
            std::max({std::abs(half), std::abs(numeric), denom_floor});
        if (fd_gap > 1e-3) {
          ++result.n_skipped;
          continue;
        }
      }
      ++result.n_checked;
      if (rel > result.max_rel) {
        result.max_rel = rel;
        result.worst =
            "input" + std::to_string(i) + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

}  // namespace testsupport
