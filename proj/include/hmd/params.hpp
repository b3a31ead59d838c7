#pragma once

// Generic handling of parameter structs.
//
// Every learnable-state struct is a template over its field type T and
// exposes `static void visit(Self&, F&&, prefix)`, which calls
// f(name, field) for each field in a fixed order. Instantiating the same
// struct with ParamSpec, Tensor or ad::Var gives, respectively, the shape
// inventory, the parameter values, and their leaves on a tape.

#include <cstddef>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "hmd/autodiff.hpp"

namespace hmd {

/// Where a parameter sits for counting purposes.
enum class ParamRole { core, embedding, output_head, aux_head, feature_projection };

const char* to_string(ParamRole role);

struct ParamSpec {
  Shape shape;
  std::size_t fan_in = 1;
  ParamRole role = ParamRole::core;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Tensor* tensor;
};

template <class S, class F>
void visit_params(S& s, F&& f) {
  std::remove_const_t<S>::visit(s, f, "");
}

template <class S>
std::vector<NamedTensor> named_tensors(S& s) {
  std::vector<NamedTensor> out;
  visit_params(s, [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
  return out;
}

template <class S>
std::vector<ConstNamedTensor> named_tensors(const S& s) {
  std::vector<ConstNamedTensor> out;
  visit_params(s, [&](const std::string& name, const Tensor& t) { out.push_back({name, &t}); });
  return out;
}

/// Uniform ±1/√fan_in initialization of every field, in visit order, from one
/// generator seeded with `seed`.
template <template <class> class S>
S<Tensor> materialize(const S<ParamSpec>& specs, std::uint64_t seed) {
  std::vector<const ParamSpec*> sp;
  visit_params(specs, [&](const std::string&, const ParamSpec& s) { sp.push_back(&s); });
  S<Tensor> out;
  std::vector<Tensor*> tp;
  visit_params(out, [&](const std::string&, Tensor& t) { tp.push_back(&t); });
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sp[i]->fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(sp[i]->shape, 0.0);
    for (auto& v : t.values()) v = dist(rng);
    *tp[i] = std::move(t);
  }
  return out;
}

/// Zero-valued tensors with the shapes in `specs`.
template <template <class> class S>
S<Tensor> zeros_like(const S<ParamSpec>& specs) {
  std::vector<const ParamSpec*> sp;
  visit_params(specs, [&](const std::string&, const ParamSpec& s) { sp.push_back(&s); });
  S<Tensor> out;
  std::size_t i = 0;
  visit_params(out, [&](const std::string&, Tensor& t) { t = Tensor(sp[i++]->shape, 0.0); });
  return out;
}

/// Rebuilds a Var struct from leaves given in visit order.
template <template <class> class S>
S<ad::Var> vars_from(std::span<const ad::Var> leaves) {
  S<ad::Var> out;
  std::size_t i = 0;
  visit_params(out, [&](const std::string& name, ad::Var& v) {
    if (i >= leaves.size()) throw std::invalid_argument("vars_from: missing leaf for " + name);
    v = leaves[i++];
  });
  if (i != leaves.size()) throw std::invalid_argument("vars_from: too many leaves");
  return out;
}

/// Places every parameter on the tape. Leaves are appended to `leaves` in
/// visit order when it is non-null.
template <template <class> class S>
S<ad::Var> bind(ad::Tape& tape, const S<Tensor>& params, bool track_gradients, std::vector<ad::Var>* leaves) {
  std::vector<ad::Var> local;
  visit_params(params, [&](const std::string&, const Tensor& t) {
    local.push_back(track_gradients ? tape.parameter(t) : tape.constant(t));
  });
  auto out = vars_from<S>(local);
  if (leaves) leaves->insert(leaves->end(), local.begin(), local.end());
  return out;
}

}  // namespace hmd
