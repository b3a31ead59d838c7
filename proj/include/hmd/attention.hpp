#pragma once

// Soft additive attention and scaled dot-product attention over a slot set.
//
// Soft:  e_i = wᵀ·tanh(Wa·query + Ua·slot_i + ba)
// Dot:   e_i = (query·slot_i) / √n
// Both:  α = softmax(e),  pooled = Σ α_i·slot_i
//
// The same routine serves memory attention (slots = a memory bank) and
// visual attention (slots = projected frame features).

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "hmd/autodiff.hpp"

namespace hmd {

enum class AttentionKind { soft, dot };

std::string_view to_string(AttentionKind kind);
AttentionKind parse_attention_kind(std::string_view name);

template <class T>
struct AttentionT {
  T score;      // w, d_a
  T query_map;  // Wa, d_a × query width
  T slot_map;   // Ua, d_a × slot width
  T bias;       // ba, d_a

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix) {
    f(prefix + "score", self.score);
    f(prefix + "query_map", self.query_map);
    f(prefix + "slot_map", self.slot_map);
    f(prefix + "bias", self.bias);
  }
};

using AttentionParams = AttentionT<Tensor>;
using AttentionVars = AttentionT<ad::Var>;

AttentionT<Shape> attention_shapes(std::size_t attention_width, std::size_t query_width, std::size_t slot_width);

struct AttentionResult {
  ad::Var weights;  // one per slot
  ad::Var pooled;   // slot width
};

/// `slots` is a k×n matrix (k ≥ 1).
AttentionResult soft_attention(ad::Var query, ad::Var slots, const AttentionVars& params);
AttentionResult soft_attention(ad::Var query, std::span<const ad::Var> slots, const AttentionVars& params);

AttentionResult dot_attention(ad::Var query, ad::Var slots);
AttentionResult dot_attention(ad::Var query, std::span<const ad::Var> slots);

/// Dispatches on `kind`; `params` is ignored for dot attention.
AttentionResult attend(AttentionKind kind, ad::Var query, ad::Var slots, const AttentionVars& params);

}  // namespace hmd
