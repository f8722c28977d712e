#pragma once

// Brute-force oracles shared by the unit tests and the acceptance run.

#include <cstddef>

#include "gandyn/tensor.hpp"

namespace gandyn::ref {

// Dense reference convolution on [n, c, h, w], stride 1, zero padding.
inline Tensor dense_conv(const Tensor& x, const Tensor& w, std::size_t pad) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
  Tensor out({n, co, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = 0.0;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += w[((o * ci + c) * k + ky) * k + kx] * x[((b * ci + c) * h + iy) * wd + ix];
              }
          out[((b * co + o) * oh + y) * ow + xx] = acc;
        }
  return out;
}

inline void add_bias_lrelu(Tensor& t, const Tensor& bias, double slope) {
  const std::size_t c = t.dim(1), hw = t.dim(2) * t.dim(3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t[i] + bias[(i / hw) % c];
    t[i] = v >= 0 ? v : slope * v;
  }
}

}  // namespace gandyn::ref
