#include "hmd/fusion.hpp"

#include <stdexcept>

namespace hmd {

ad::Var ccmf_fuse(ad::Var visual, ad::Var lexical, const CcmfVars& params) {
  const auto& vs = visual.shape();
  const auto& cs = lexical.shape();
  if (vs.size() != 1 || vs != cs) {
    throw std::invalid_argument("ccmf_fuse: visual " + shape_to_string(vs) + " and lexical " + shape_to_string(cs) +
                                " must be vectors of equal width");
  }
  const Shape square{vs[0], vs[0]};
  if (params.visual_map.shape() != square || params.lexical_map.shape() != square) {
    throw std::invalid_argument("ccmf_fuse: maps must be " + shape_to_string(square) + ", got " +
                                shape_to_string(params.visual_map.shape()) + " and " +
                                shape_to_string(params.lexical_map.shape()));
  }
  const ad::Var kernel1 = ad::linear(visual, params.visual_map);
  const ad::Var kernel2 = ad::linear(lexical, params.lexical_map);
  const ad::Var a = ad::circular_conv(kernel2, visual);
  const ad::Var b = ad::circular_conv(kernel1, lexical);
  return ad::add(ad::relu(a), ad::relu(b));
}

}  // namespace hmd
