#include "gandyn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace gandyn::kernels {

double softplus(double x) noexcept {
  // max(x, 0) + log1p(e^{-|x|}) never overflows.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool broadcastable(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) return false;
  const std::size_t lead = to.size() - from.size();
  for (std::size_t j = 0; j < from.size(); ++j) {
    if (from[j] != 1 && from[j] != to[lead + j]) return false;
  }
  return true;
}

namespace {

// Strides into a right-aligned `small` tensor when walking the elements of `big`.
std::vector<std::size_t> aligned_strides(const Shape& small, const Shape& big) {
  std::vector<std::size_t> strides(big.size(), 0);
  const std::size_t lead = big.size() - small.size();
  std::size_t stride = 1;
  for (std::size_t j = small.size(); j-- > 0;) {
    strides[lead + j] = small[j] == 1 ? 0 : stride;
    stride *= small[j];
  }
  return strides;
}

// Calls fn(big_index, small_offset) for every element of `big` in row-major order.
template <typename Fn>
void walk_aligned(const Shape& big, const std::vector<std::size_t>& strides, Fn&& fn) {
  const std::size_t total = element_count(big);
  if (total == 0) return;
  const std::size_t r = big.size();
  if (r == 0) {
    fn(std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < total; ++k) {
    fn(k, off);
    std::size_t d = r - 1;
    ++idx[d];
    off += strides[d];
    while (idx[d] == big[d] && d > 0) {
      off -= strides[d] * big[d];
      idx[d] = 0;
      --d;
      ++idx[d];
      off += strides[d];
    }
  }
}

}  // namespace

void broadcast_to(const Tensor& in, const Shape& shape, Tensor& out) {
  out.resize(shape);
  if (in.size() == 1) {
    std::fill(out.data().begin(), out.data().end(), in[0]);
    return;
  }
  if (in.shape() == shape) {
    std::copy(in.data().begin(), in.data().end(), out.data().begin());
    return;
  }
  const auto strides = aligned_strides(in.shape(), shape);
  walk_aligned(shape, strides, [&](std::size_t k, std::size_t off) { out[k] = in[off]; });
}

void sum_to(const Tensor& in, const Shape& shape, Tensor& out) {
  out.resize(shape);
  std::fill(out.data().begin(), out.data().end(), 0.0);
  if (in.shape() == shape) {
    std::copy(in.data().begin(), in.data().end(), out.data().begin());
    return;
  }
  const auto strides = aligned_strides(shape, in.shape());
  walk_aligned(in.shape(), strides, [&](std::size_t k, std::size_t off) { out[off] += in[k]; });
}

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  out.resize({a.dim(0), b.dim(1)});
  Eigen::Map<const RowMajor> ma(a.data().data(), m, k);
  Eigen::Map<const RowMajor> mb(b.data().data(), k, n);
  Eigen::Map<RowMajor> mo(out.data().data(), m, n);
  mo.noalias() = ma * mb;
}

void transpose(const Tensor& a, Tensor& out) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  out.resize({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
}

namespace {

struct ConvDims {
  std::size_t batch, cin, h, w, cout, kh, kw, ho, wo, cin_g, cout_g, pad;
};

ConvDims conv_dims(const Shape& x, const Shape& weight, ConvGeometry geo) {
  ConvDims d{};
  d.batch = x[0];
  d.cin = x[1];
  d.h = x[2];
  d.w = x[3];
  d.cout = weight[0];
  d.cin_g = weight[1];
  d.kh = weight[2];
  d.kw = weight[3];
  d.pad = geo.padding;
  d.ho = d.h + 2 * d.pad - d.kh + 1;
  d.wo = d.w + 2 * d.pad - d.kw + 1;
  d.cout_g = d.cout / geo.groups;
  return d;
}

// Visits every (input pixel, weight tap, output pixel) triple of a stride-1
// grouped correlation, handing row pointers to `fn` for the valid x-range.
template <typename Fn>
void for_each_tap(const ConvDims& d, Fn&& fn) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t co = 0; co < d.cout; ++co) {
      const std::size_t group = co / d.cout_g;
      for (std::size_t cl = 0; cl < d.cin_g; ++cl) {
        const std::size_t ci = group * d.cin_g + cl;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::size_t w_index = ((co * d.cin_g + cl) * d.kh + ky) * d.kw + kx;
            // ix = ox + kx - pad must lie in [0, w).
            const std::ptrdiff_t shift_x = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(d.pad);
            const std::ptrdiff_t ox_lo = std::max<std::ptrdiff_t>(0, -shift_x);
            const std::ptrdiff_t ox_hi =
                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(d.wo), static_cast<std::ptrdiff_t>(d.w) - shift_x);
            if (ox_lo >= ox_hi) continue;
            for (std::size_t oy = 0; oy < d.ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(d.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
              const std::size_t x_row = ((b * d.cin + ci) * d.h + static_cast<std::size_t>(iy)) * d.w;
              const std::size_t y_row = ((b * d.cout + co) * d.ho + oy) * d.wo;
              fn(w_index, x_row, y_row, ox_lo, ox_hi, shift_x);
            }
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d(const Tensor& x, const Tensor& weight, ConvGeometry geo, Tensor& out) {
  const ConvDims d = conv_dims(x.shape(), weight.shape(), geo);
  out.resize({d.batch, d.cout, d.ho, d.wo});
  std::fill(out.data().begin(), out.data().end(), 0.0);
  const double* px = x.data().data();
  const double* pw = weight.data().data();
  double* py = out.data().data();
  for_each_tap(d, [&](std::size_t wi, std::size_t xr, std::size_t yr, std::ptrdiff_t lo, std::ptrdiff_t hi,
                      std::ptrdiff_t sx) {
    const double wv = pw[wi];
    for (std::ptrdiff_t ox = lo; ox < hi; ++ox) py[yr + ox] += wv * px[xr + ox + sx];
  });
}

void conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, ConvGeometry geo,
                       const Shape& input_shape, Tensor& out) {
  const ConvDims d = conv_dims(input_shape, weight.shape(), geo);
  out.resize(input_shape);
  std::fill(out.data().begin(), out.data().end(), 0.0);
  const double* pg = grad_out.data().data();
  const double* pw = weight.data().data();
  double* px = out.data().data();
  for_each_tap(d, [&](std::size_t wi, std::size_t xr, std::size_t yr, std::ptrdiff_t lo, std::ptrdiff_t hi,
                      std::ptrdiff_t sx) {
    const double wv = pw[wi];
    for (std::ptrdiff_t ox = lo; ox < hi; ++ox) px[xr + ox + sx] += wv * pg[yr + ox];
  });
}

void conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, ConvGeometry geo,
                        const Shape& weight_shape, Tensor& out) {
  const ConvDims d = conv_dims(x.shape(), weight_shape, geo);
  out.resize(weight_shape);
  std::fill(out.data().begin(), out.data().end(), 0.0);
  const double* px = x.data().data();
  const double* pg = grad_out.data().data();
  double* pw = out.data().data();
  for_each_tap(d, [&](std::size_t wi, std::size_t xr, std::size_t yr, std::ptrdiff_t lo, std::ptrdiff_t hi,
                      std::ptrdiff_t sx) {
    double acc = 0.0;
    for (std::ptrdiff_t ox = lo; ox < hi; ++ox) acc += pg[yr + ox] * px[xr + ox + sx];
    pw[wi] += acc;
  });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> interpolation_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, last);
    const double base = std::floor(src);
    const double frac = src - base;
    const auto i0 = static_cast<std::size_t>(base);
    taps[i] = Tap{i0, std::min(i0 + 1, in - 1), 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

void resample(const Tensor& x, std::size_t out_h, std::size_t out_w, Tensor& out) {
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto tx = interpolation_taps(w, out_w);
  const auto ty = interpolation_taps(h, out_h);
  std::vector<double> rows(planes * h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = x.data().data() + (p * h + y) * w;
      double* dst = rows.data() + (p * h + y) * out_w;
      for (std::size_t i = 0; i < out_w; ++i) dst[i] = tx[i].w0 * src[tx[i].i0] + tx[i].w1 * src[tx[i].i1];
    }
  }
  out.resize({x.dim(0), x.dim(1), out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t j = 0; j < out_h; ++j) {
      const double* r0 = rows.data() + (p * h + ty[j].i0) * out_w;
      const double* r1 = rows.data() + (p * h + ty[j].i1) * out_w;
      double* dst = out.data().data() + (p * out_h + j) * out_w;
      for (std::size_t i = 0; i < out_w; ++i) dst[i] = ty[j].w0 * r0[i] + ty[j].w1 * r1[i];
    }
  }
}

void resample_adjoint(const Tensor& grad_out, const Shape& input_shape, Tensor& out) {
  const std::size_t planes = input_shape[0] * input_shape[1];
  const std::size_t h = input_shape[2], w = input_shape[3];
  const std::size_t out_h = grad_out.dim(2), out_w = grad_out.dim(3);
  const auto tx = interpolation_taps(w, out_w);
  const auto ty = interpolation_taps(h, out_h);
  std::vector<double> rows(planes * h * out_w, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t j = 0; j < out_h; ++j) {
      const double* g = grad_out.data().data() + (p * out_h + j) * out_w;
      double* r0 = rows.data() + (p * h + ty[j].i0) * out_w;
      double* r1 = rows.data() + (p * h + ty[j].i1) * out_w;
      for (std::size_t i = 0; i < out_w; ++i) {
        r0[i] += ty[j].w0 * g[i];
        r1[i] += ty[j].w1 * g[i];
      }
    }
  }
  out.resize(input_shape);
  std::fill(out.data().begin(), out.data().end(), 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = rows.data() + (p * h + y) * out_w;
      double* dst = out.data().data() + (p * h + y) * w;
      for (std::size_t i = 0; i < out_w; ++i) {
        dst[tx[i].i0] += tx[i].w0 * src[i];
        dst[tx[i].i1] += tx[i].w1 * src[i];
      }
    }
  }
}

}  // namespace gandyn::kernels
