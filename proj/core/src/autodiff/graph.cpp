#include "savn/autodiff/graph.hpp"

#include <unordered_map>

namespace savn::ad {

ExprGraph ExprGraph::capture(const Var& root) {
  if (!root) throw GraphError("capture: empty root");
  ExprGraph g;
  std::unordered_map<const Node*, std::size_t> position;
  std::vector<std::pair<const Node*, std::size_t>> stack{{root.node().get(), 0}};
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (!position.count(child)) stack.emplace_back(child, 0);
      continue;
    }
    if (!position.count(node)) {
      Record r;
      r.op = node->inputs.empty() ? Op::Leaf : node->op;
      r.attrs = node->attrs;
      r.cached = node->value;
      if (r.op == Op::Leaf && node->requires_grad) r.leaf_name = node->name;
      for (const auto& in : node->inputs) r.inputs.push_back(position.at(in.get()));
      position.emplace(node, g.records_.size());
      g.records_.push_back(std::move(r));
    }
    stack.pop_back();
  }
  return g;
}

Tensor ExprGraph::forward(const std::map<std::string, Tensor>& bindings) {
  for (const auto& [name, value] : bindings) {
    bool found = false;
    for (auto& r : records_) {
      if (r.op != Op::Leaf || r.leaf_name != name) continue;
      if (r.cached.shape() != value.shape()) {
        throw ShapeError("binding '" + name + "' has shape " + shape_string(value.shape()) +
                         ", graph expects " + shape_string(r.cached.shape()));
      }
      found = true;
    }
    if (!found) throw GraphError("binding '" + name + "' names no leaf of the graph");
  }
  std::vector<const Tensor*> args;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    Record& r = records_[i];
    if (r.op == Op::Leaf) {
      if (!r.leaf_name.empty()) {
        auto it = bindings.find(r.leaf_name);
        if (it != bindings.end()) r.cached = it->second;
      }
      continue;
    }
    args.clear();
    for (std::size_t in : r.inputs) args.push_back(&records_[in].cached);
    r.cached = evaluate(r.op, args, r.attrs);
    if (!r.cached.all_finite()) throw NonFiniteError(r.op, i);
  }
  return records_.back().cached;
}

std::vector<std::string> ExprGraph::leaf_names() const {
  std::vector<std::string> names;
  for (const auto& r : records_) {
    if (r.op == Op::Leaf && !r.leaf_name.empty()) names.push_back(r.leaf_name);
  }
  return names;
}

void ParamVector::add_slice(const std::string& name, Shape shape) {
  if (index_.count(name)) throw GraphError("duplicate parameter slice '" + name + "'");
  Slice s{name, values_.size(), std::move(shape)};
  values_.resize(values_.size() + s.size(), 0.0);
  index_.emplace(name, slices_.size());
  slices_.push_back(std::move(s));
}

const ParamVector::Slice& ParamVector::slice(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw GraphError("unknown parameter slice '" + name + "'");
  return slices_[it->second];
}

bool ParamVector::has_slice(const std::string& name) const { return index_.count(name) > 0; }

std::span<double> ParamVector::view(const std::string& name) {
  const Slice& s = slice(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::view(const std::string& name) const {
  const Slice& s = slice(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

bool ParamVector::same_layout(const ParamVector& other) const { return slices_ == other.slices_; }

std::map<std::string, Var> ParamVector::bind(const Var& flat) const {
  if (flat.size() != values_.size()) {
    throw ShapeError("bind: flat value has " + std::to_string(flat.size()) + " entries, layout has " +
                     std::to_string(values_.size()));
  }
  std::map<std::string, Var> out;
  for (const auto& s : slices_) out.emplace(s.name, ad::reshape(ad::slice(flat, s.offset, s.size()), s.shape));
  return out;
}

bool operator==(const ParamVector::Slice& a, const ParamVector::Slice& b) {
  return a.name == b.name && a.offset == b.offset && a.shape == b.shape;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  return a.slices_ == b.slices_ && a.values_ == b.values_;
}

}  // namespace savn::ad
