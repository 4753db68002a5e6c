#pragma once

#include <functional>
#include <span>
#include <vector>

#include "savn/autodiff/var.hpp"

namespace savn::ad {

using LossFn = std::function<Var(const Var& params)>;

struct InnerUpdate {
  double alpha = 0.0;
  int steps = 1;
  /// Treat each inner gradient as a constant (drops the Hessian term).
  bool first_order = false;
};

/// Applies `steps` SGD updates theta <- theta - alpha * d inner / d theta and
/// returns the adapted parameters as an expression of `theta`.
Var adapt(const Var& theta, const LossFn& inner, const InnerUpdate& update);

struct MetaGradient {
  Tensor theta;                // d outer(adapted) / d theta
  std::vector<Tensor> extra;   // same, for each extra leaf
  double outer_value = 0.0;
};

/// Total derivative of outer(theta - alpha * grad inner(theta)) through up to
/// four chained updates, with respect to theta and any extra leaves the two
/// losses close over.
MetaGradient grad_through_update(const Tensor& theta, double alpha, const LossFn& inner,
                                 const LossFn& outer, int steps = 1,
                                 std::span<const Var> extra_leaves = {});

MetaGradient first_order_grad_through_update(const Tensor& theta, double alpha, const LossFn& inner,
                                             const LossFn& outer, int steps = 1,
                                             std::span<const Var> extra_leaves = {});

inline constexpr int kMaxInnerUpdates = 4;

}  // namespace savn::ad
