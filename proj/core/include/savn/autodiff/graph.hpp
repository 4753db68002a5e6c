#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "savn/autodiff/var.hpp"

namespace savn::ad {

/// A frozen, topologically ordered copy of the recorded graph below a root.
/// Named parameter leaves can be rebound and the whole graph re-evaluated
/// without re-running the code that built it.
class ExprGraph {
 public:
  struct Record {
    Op op;
    std::vector<std::size_t> inputs;  // indices into the record list, all smaller
    OpAttrs attrs;
    Tensor cached;
    std::string leaf_name;  // non-empty for named parameter leaves
  };

  static ExprGraph capture(const Var& root);

  /// Re-evaluates with named leaves replaced by `bindings`; unbound leaves keep
  /// their captured values. Throws ShapeError on mismatched bindings and
  /// NonFiniteError naming the first offending record.
  Tensor forward(const std::map<std::string, Tensor>& bindings = {});

  const std::vector<Record>& records() const noexcept { return records_; }
  std::vector<std::string> leaf_names() const;
  std::size_t root_index() const noexcept { return records_.size() - 1; }

 private:
  std::vector<Record> records_;
};

/// Flat parameter store with disjoint named slices that cover it exactly.
class ParamVector {
 public:
  struct Slice {
    std::string name;
    std::size_t offset = 0;
    Shape shape;
    std::size_t size() const { return numel(shape); }
  };

  ParamVector() = default;

  /// Appends a zero-filled slice; names must be unique.
  void add_slice(const std::string& name, Shape shape);

  const std::vector<Slice>& slices() const noexcept { return slices_; }
  const Slice& slice(const std::string& name) const;
  bool has_slice(const std::string& name) const;
  std::size_t size() const noexcept { return values_.size(); }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;

  /// Same layout, different values.
  bool same_layout(const ParamVector& other) const;

  /// The flat values as a single rank-1 tensor.
  Tensor as_tensor() const { return Tensor::vector(values_); }

  /// Named sub-expressions of a flat rank-1 graph value laid out like this store.
  std::map<std::string, Var> bind(const Var& flat) const;

  friend bool operator==(const ParamVector& a, const ParamVector& b);

 private:
  std::vector<Slice> slices_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> values_;
};

bool operator==(const ParamVector::Slice& a, const ParamVector::Slice& b);

}  // namespace savn::ad
