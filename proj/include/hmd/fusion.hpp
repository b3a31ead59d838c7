#pragma once

// Cross-convolution multi-modal fusion (CCMF).
//
// Each modality is mapped into a convolution kernel and convolved with the
// other modality; the two rectified results are summed:
//
//   kernel1 = V·W1ᵀ    kernel2 = C·W2ᵀ
//   A = kernel2 ⊛ V    B = kernel1 ⊛ C
//   M = ReLU(A) + ReLU(B)
//
// ⊛ is circular convolution, so M keeps the width n of V and C.

#include <string>

#include "hmd/autodiff.hpp"

namespace hmd {

template <class T>
struct FusionT {
  T visual_map;   // W1, n×n
  T lexical_map;  // W2, n×n

  template <class Self, class F>
  static void visit(Self& self, F&& f, const std::string& prefix) {
    f(prefix + "visual_map", self.visual_map);
    f(prefix + "lexical_map", self.lexical_map);
  }
};

using CcmfParams = FusionT<Tensor>;
using CcmfVars = FusionT<ad::Var>;

/// Fuses the visual mean V and lexical feature C (both width n).
ad::Var ccmf_fuse(ad::Var visual, ad::Var lexical, const CcmfVars& params);

}  // namespace hmd
