#include "hmd/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hmd {

std::string_view to_string(AttentionKind kind) { return kind == AttentionKind::soft ? "soft" : "dot"; }

AttentionKind parse_attention_kind(std::string_view name) {
  if (name == "soft") return AttentionKind::soft;
  if (name == "dot") return AttentionKind::dot;
  throw std::invalid_argument("unknown attention kind '" + std::string(name) + "' (expected soft or dot)");
}

AttentionT<Shape> attention_shapes(std::size_t attention_width, std::size_t query_width, std::size_t slot_width) {
  return {Shape{attention_width}, Shape{attention_width, query_width}, Shape{attention_width, slot_width},
          Shape{attention_width}};
}

namespace {

void check_slots(const char* op, ad::Var query, ad::Var slots) {
  if (query.shape().size() != 1) {
    throw std::invalid_argument(std::string(op) + ": query must be a vector, got " + shape_to_string(query.shape()));
  }
  if (slots.shape().size() != 2) {
    throw std::invalid_argument(std::string(op) + ": slots must be a k×n matrix, got " +
                                shape_to_string(slots.shape()));
  }
}

ad::Var stacked(const char* op, std::span<const ad::Var> slots) {
  if (slots.empty()) throw std::invalid_argument(std::string(op) + ": empty slot set");
  return ad::stack(slots);
}

AttentionResult pool(ad::Var scores, ad::Var slots) {
  const std::size_t k = slots.shape()[0];
  const std::size_t n = slots.shape()[1];
  const ad::Var weights = ad::softmax(ad::reshape(scores, Shape{k}));
  const ad::Var pooled = ad::reshape(ad::channel_projection(ad::reshape(weights, Shape{1, k}), slots), Shape{n});
  return {weights, pooled};
}

}  // namespace

AttentionResult soft_attention(ad::Var query, ad::Var slots, const AttentionVars& params) {
  check_slots("soft_attention", query, slots);
  const std::size_t d_a = params.score.size();
  const ad::Var q = ad::linear(query, params.query_map);
  const ad::Var u = ad::linear(slots, params.slot_map, params.bias);
  const ad::Var hidden = ad::tanh(ad::add_rows(u, q));
  const ad::Var scores = ad::linear(hidden, ad::reshape(params.score, Shape{1, d_a}));
  return pool(scores, slots);
}

AttentionResult soft_attention(ad::Var query, std::span<const ad::Var> slots, const AttentionVars& params) {
  return soft_attention(query, stacked("soft_attention", slots), params);
}

AttentionResult dot_attention(ad::Var query, ad::Var slots) {
  check_slots("dot_attention", query, slots);
  const std::size_t n = slots.shape()[1];
  if (query.size() != n) {
    throw std::invalid_argument("dot_attention: query " + shape_to_string(query.shape()) + " vs slots " +
                                shape_to_string(slots.shape()));
  }
  const ad::Var raw = ad::linear(slots, ad::reshape(query, Shape{1, n}));
  return pool(ad::scale(raw, 1.0 / std::sqrt(static_cast<double>(n))), slots);
}

AttentionResult dot_attention(ad::Var query, std::span<const ad::Var> slots) {
  return dot_attention(query, stacked("dot_attention", slots));
}

AttentionResult attend(AttentionKind kind, ad::Var query, ad::Var slots, const AttentionVars& params) {
  return kind == AttentionKind::soft ? soft_attention(query, slots, params) : dot_attention(query, slots);
}

}  // namespace hmd
