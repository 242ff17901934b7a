#pragma once

#include "bsnn/ops.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn::verify {

/// Brute-force SOP count: every (input spike, output position, kernel offset,
/// output channel) quadruple that the conv actually computes.
double enumerate_sops(const Tensor& spikes, const ConvSpec& spec);

}  // namespace bsnn::verify
