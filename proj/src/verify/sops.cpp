#include "bsnn/verify/sops.hpp"

namespace bsnn::verify {

double enumerate_sops(const Tensor& spikes, const ConvSpec& s) {
  const std::size_t B = spikes.dim(0), H = spikes.dim(2), W = spikes.dim(3);
  const auto out = s.output_shape(spikes.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < s.in_channels; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          if (spikes.at(b, c, h, w) == 0.0) continue;
          for (std::size_t oh = 0; oh < out[2]; ++oh)
            for (std::size_t ow = 0; ow < out[3]; ++ow)
              for (std::size_t kh = 0; kh < s.kernel_h; ++kh)
                for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
                  const long ih = static_cast<long>(oh * s.stride + kh) - static_cast<long>(s.padding);
                  const long iw = static_cast<long>(ow * s.stride + kw) - static_cast<long>(s.padding);
                  if (ih == static_cast<long>(h) && iw == static_cast<long>(w)) total += static_cast<double>(s.out_channels);
                }
        }
  return total;
}

}  // namespace bsnn::verify
