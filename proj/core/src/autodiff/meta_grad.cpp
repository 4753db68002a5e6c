#include "savn/autodiff/meta_grad.hpp"

namespace savn::ad {

Var adapt(const Var& theta, const LossFn& inner, const InnerUpdate& update) {
  if (update.steps < 0 || update.steps > kMaxInnerUpdates) {
    throw GraphError("adapt: between 0 and " + std::to_string(kMaxInnerUpdates) +
                     " inner updates are supported");
  }
  if (update.alpha == 0.0) return theta;
  Var current = theta;
  for (int s = 0; s < update.steps; ++s) {
    Var loss = inner(current);
    Var g = grad(loss, current, {.create_graph = !update.first_order, .allow_unused = true});
    if (g.shape() != current.shape()) {
      throw ShapeError("adapt: inner gradient shape " + shape_string(g.shape()) +
                       " differs from parameters " + shape_string(current.shape()));
    }
    if (update.first_order) g = g.detach();
    current = sub(current, scale(g, update.alpha));
  }
  return current;
}

namespace {

MetaGradient through_update(const Tensor& theta0, double alpha, const LossFn& inner,
                            const LossFn& outer, int steps, std::span<const Var> extra,
                            bool first_order) {
  Var theta = Var::parameter(theta0, "theta");
  Var adapted = adapt(theta, inner, {.alpha = alpha, .steps = steps, .first_order = first_order});
  Var loss = outer(adapted);
  std::vector<Var> wrt{theta};
  wrt.insert(wrt.end(), extra.begin(), extra.end());
  auto grads = grad(loss, wrt, {.create_graph = false, .allow_unused = true});
  MetaGradient out;
  out.outer_value = loss.item();
  out.theta = grads[0].value();
  for (std::size_t i = 1; i < grads.size(); ++i) out.extra.push_back(grads[i].value());
  return out;
}

}  // namespace

MetaGradient grad_through_update(const Tensor& theta, double alpha, const LossFn& inner,
                                 const LossFn& outer, int steps, std::span<const Var> extra_leaves) {
  return through_update(theta, alpha, inner, outer, steps, extra_leaves, false);
}

MetaGradient first_order_grad_through_update(const Tensor& theta, double alpha, const LossFn& inner,
                                             const LossFn& outer, int steps,
                                             std::span<const Var> extra_leaves) {
  return through_update(theta, alpha, inner, outer, steps, extra_leaves, true);
}

}  // namespace savn::ad
