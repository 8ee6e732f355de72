// Copyright 2026 The FloWM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "flowm/error.hpp"

namespace flowm::grid {
namespace {

int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

std::string shape_str(const Field& f) {
  return std::to_string(f.channels) + "x" + std::to_string(f.height) + "x" +
         std::to_string(f.width);
}

void check_kernel(const Field& f, const Kernel& k) {
  if (k.in_channels != f.channels) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.in_channels) +
                     " input channels, field is " + shape_str(f));
  }
  if (k.kh % 2 == 0 || k.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel extent must be odd");
  }
}

constexpr int kLanes = 8;
using Vec = double __attribute__((vector_size(kLanes * sizeof(double))));

inline Vec load(const double* p) {
  Vec v;
  __builtin_memcpy(&v, p, sizeof(Vec));
  return v;
}

inline Vec splat(double x) { return Vec{} + x; }

inline void store_partial(double* p, const Vec& v, int n) {
  if (n == kLanes) {
    __builtin_memcpy(p, &v, sizeof(Vec));
  } else {
    for (int i = 0; i < n; ++i) p[i] = v[i];
  }
}

// Copies f into an (H + kh - 1) x wp buffer per channel, filling the border by
// wrap-around or zeros. Columns past W + kw - 1 stay zero; they only feed
// lanes that are never stored.
void build_padded(const Field& f, int kh, int kw, Padding padding, int wp,
                  std::vector<double>& buf) {
  const int ry = kh / 2;
  const int rx = kw / 2;
  const int hp = f.height + kh - 1;
  const int wfill = f.width + kw - 1;
  buf.assign(static_cast<std::size_t>(f.channels) * hp * wp, 0.0);
  for (int c = 0; c < f.channels; ++c) {
    double* dst = buf.data() + static_cast<std::size_t>(c) * hp * wp;
    for (int py = 0; py < hp; ++py) {
      const int sy = py - ry;
      if (padding == Padding::kZero && (sy < 0 || sy >= f.height)) continue;
      const double* src = &f.data[(static_cast<std::size_t>(c) * f.height +
                                   wrap(sy, f.height)) * f.width];
      double* row = dst + static_cast<std::size_t>(py) * wp;
      for (int px = 0; px < wfill; ++px) {
        const int sx = px - rx;
        if (padding == Padding::kZero && (sx < 0 || sx >= f.width)) continue;
        row[px] = src[wrap(sx, f.width)];
      }
    }
  }
}

}  // namespace

Field::Field(int c, int h, int w, double fill)
    : channels(c), height(h), width(w) {
  if (c < 0 || h < 0 || w < 0) throw ShapeError("Field: negative extent");
  data.assign(static_cast<std::size_t>(c) * h * w, fill);
}

Kernel::Kernel(int out, int in, int kh_, int kw_, bool with_bias)
    : out_channels(out), in_channels(in), kh(kh_), kw(kw_) {
  if (out <= 0 || in <= 0 || kh_ <= 0 || kw_ <= 0) {
    throw ShapeError("Kernel: extents must be positive");
  }
  if (kh_ % 2 == 0 || kw_ % 2 == 0) {
    throw ShapeError("Kernel: extents must be odd");
  }
  weights.assign(static_cast<std::size_t>(out) * in * kh_ * kw_, 0.0);
  if (with_bias) bias.assign(out, 0.0);
}

Kernel Kernel::delta(int channels, int kh, int kw) {
  Kernel k(channels, channels, kh, kw);
  for (int c = 0; c < channels; ++c) k.w(c, c, kh / 2, kw / 2) = 1.0;
  return k;
}

Field roll(const Field& f, int dx, int dy) {
  Field out(f.channels, f.height, f.width);
  if (f.size() == 0) return out;
  const int sx = wrap(dx, f.width);
  const int sy = wrap(dy, f.height);
  const std::size_t w = f.width;
  for (int c = 0; c < f.channels; ++c) {
    for (int y = 0; y < f.height; ++y) {
      const double* src =
          &f.data[(static_cast<std::size_t>(c) * f.height + wrap(y - sy, f.height)) * w];
      double* dst = &out.data[(static_cast<std::size_t>(c) * f.height + y) * w];
      // dst[x] = src[x - sx]: the tail of src lands first.
      std::memcpy(dst, src + (w - sx), sx * sizeof(double));
      std::memcpy(dst + sx, src, (w - sx) * sizeof(double));
    }
  }
  return out;
}

Field conv2d_circular(const Field& f, const Kernel& k) {
  return conv2d(f, k, Padding::kCircular);
}

Field conv2d(const Field& f, const Kernel& k, Padding padding) {
  Field out;
  conv2d_into(f, k, padding, out);
  return out;
}

void conv2d_into(const Field& f, const Kernel& k, Padding padding, Field& out) {
  check_kernel(f, k);
  const int h = f.height;
  const int w = f.width;
  const int nchunks = (w + kLanes - 1) / kLanes;
  const int wr = nchunks * kLanes;
  const int hp = h + k.kh - 1;
  const int wp = wr + k.kw - 1;
  const std::size_t pp = static_cast<std::size_t>(hp) * wp;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  thread_local std::vector<double> padded;
  build_padded(f, k.kh, k.kw, padding, wp, padded);

  // Weights packed as [block][ky][kx][in][4] with zero rows past out_channels.
  const int blocks = (k.out_channels + 3) / 4;
  const int taps = k.kh * k.kw;
  thread_local std::vector<double> packed;
  packed.assign(static_cast<std::size_t>(blocks) * taps * k.in_channels * 4, 0.0);
  for (int o = 0; o < k.out_channels; ++o) {
    for (int ky = 0; ky < k.kh; ++ky) {
      for (int kx = 0; kx < k.kw; ++kx) {
        for (int i = 0; i < k.in_channels; ++i) {
          packed[((static_cast<std::size_t>(o / 4) * taps + ky * k.kw + kx) *
                      k.in_channels + i) * 4 + o % 4] = k.w(o, i, ky, kx);
        }
      }
    }
  }

  if (out.channels != k.out_channels || out.height != h || out.width != w) {
    out = Field(k.out_channels, h, w);
  }

  // Every output pixel starts from its bias and then accumulates the kernel
  // taps in row-major order with the input channel innermost. All lanes of
  // every vector execute that same sequence, so the result is independent of
  // where a pixel falls within a chunk.
  for (int b = 0; b < blocks; ++b) {
    Vec bias[4];
    for (int c = 0; c < 4; ++c) {
      const int o = b * 4 + c;
      bias[c] = splat(o < k.out_channels && k.has_bias() ? k.bias[o] : 0.0);
    }
    const double* wb = packed.data() +
                       static_cast<std::size_t>(b) * taps * k.in_channels * 4;
    for (int y = 0; y < h; ++y) {
      for (int c0 = 0; c0 < nchunks; c0 += 3) {
        const int n = std::min(3, nchunks - c0);
        Vec acc[4][3];
        for (int c = 0; c < 4; ++c) {
          for (int j = 0; j < 3; ++j) acc[c][j] = bias[c];
        }
        const double* wt = wb;
        for (int ky = 0; ky < k.kh; ++ky) {
          for (int kx = 0; kx < k.kw; ++kx) {
            const double* src = padded.data() +
                                static_cast<std::size_t>(y + ky) * wp + kx +
                                c0 * kLanes;
            if (n == 3) {
              for (int i = 0; i < k.in_channels; ++i, wt += 4) {
                const double* s = src + i * pp;
                const Vec x0 = load(s);
                const Vec x1 = load(s + kLanes);
                const Vec x2 = load(s + 2 * kLanes);
                for (int c = 0; c < 4; ++c) {
                  const Vec wv = splat(wt[c]);
                  acc[c][0] += wv * x0;
                  acc[c][1] += wv * x1;
                  acc[c][2] += wv * x2;
                }
              }
            } else {
              for (int i = 0; i < k.in_channels; ++i, wt += 4) {
                const double* s = src + i * pp;
                Vec x[3];
                for (int j = 0; j < n; ++j) x[j] = load(s + j * kLanes);
                for (int c = 0; c < 4; ++c) {
                  const Vec wv = splat(wt[c]);
                  for (int j = 0; j < n; ++j) acc[c][j] += wv * x[j];
                }
              }
            }
          }
        }
        for (int c = 0; c < 4; ++c) {
          const int o = b * 4 + c;
          if (o >= k.out_channels) break;
          double* dst = out.data.data() + o * plane +
                        static_cast<std::size_t>(y) * w;
          for (int j = 0; j < n; ++j) {
            const int x0 = (c0 + j) * kLanes;
            store_partial(dst + x0, acc[c][j], std::min(kLanes, w - x0));
          }
        }
      }
    }
  }
}

Field window(const Field& f, int size) {
  if (size <= 0 || size > f.height || size > f.width) {
    throw ShapeError("window: size " + std::to_string(size) +
                     " does not fit field " + shape_str(f));
  }
  const int oy = (f.height - size) / 2;
  const int ox = (f.width - size) / 2;
  Field out(f.channels, size, size);
  for (int c = 0; c < f.channels; ++c) {
    for (int y = 0; y < size; ++y) {
      std::copy_n(&f.data[(static_cast<std::size_t>(c) * f.height + oy + y) *
                              f.width + ox],
                  size, &out.at(c, y, 0));
    }
  }
  return out;
}

namespace {

// Places f at offset ((H - h) / 2, (W - w) / 2) in an H x W zero field.
Field embed_centered(const Field& f, int height, int width) {
  if (height < f.height || width < f.width) {
    throw ShapeError("pad: target " + std::to_string(height) + "x" +
                     std::to_string(width) + " smaller than field " +
                     shape_str(f));
  }
  if ((height - f.height) % 2 != 0 || (width - f.width) % 2 != 0) {
    throw ShapeError("pad: extent difference must be even for centered placement");
  }
  const int oy = (height - f.height) / 2;
  const int ox = (width - f.width) / 2;
  Field out(f.channels, height, width);
  for (int c = 0; c < f.channels; ++c) {
    for (int y = 0; y < f.height; ++y) {
      std::copy_n(&f.at(c, y, 0), f.width,
                  &out.data[(static_cast<std::size_t>(c) * height + oy + y) *
                                width + ox]);
    }
  }
  return out;
}

}  // namespace

Field pad(const Field& f, int world) { return embed_centered(f, world, world); }

MaxPool maxpool_velocity(const VelocityStack& h) {
  if (h.empty()) throw ShapeError("maxpool_velocity: empty velocity stack");
  for (const auto& s : h) {
    if (!s.same_shape(h.front())) {
      throw ShapeError("maxpool_velocity: slices differ in shape");
    }
  }
  MaxPool out{h.front(), std::vector<std::int32_t>(h.front().size(), 0)};
  for (std::size_t v = 1; v < h.size(); ++v) {
    const auto& s = h[v].data;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] > out.value.data[i]) {
        out.value.data[i] = s[i];
        out.argmax[i] = static_cast<std::int32_t>(v);
      }
    }
  }
  return out;
}

double apply(Activation fn, double x) {
  switch (fn) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Field pointwise(const Field& f, Activation fn) {
  Field out = f;
  if (fn == Activation::kIdentity) return out;
  for (double& v : out.data) v = apply(fn, v);
  return out;
}

double sum(const Field& f) {
  double s = 0.0;
  for (double v : f.data) s += v;
  return s;
}

Field roll_vjp(const Field& cotangent, int dx, int dy) {
  return roll(cotangent, -dx, -dy);
}

ConvGrads conv2d_vjp(const Field& input, const Kernel& k,
                     const Field& cotangent, Padding padding) {
  ConvGrads g{Field(input.channels, input.height, input.width),
              Kernel(k.out_channels, k.in_channels, k.kh, k.kw, k.has_bias())};
  conv2d_vjp_accumulate(input, k, cotangent, padding, &g.input, &g.kernel);
  return g;
}

void conv2d_vjp_accumulate(const Field& input, const Kernel& k,
                           const Field& cotangent, Padding padding,
                           Field* input_grad, Kernel* kernel_grad) {
  check_kernel(input, k);
  if (cotangent.channels != k.out_channels ||
      cotangent.height != input.height || cotangent.width != input.width) {
    throw ShapeError("conv2d_vjp: cotangent " + shape_str(cotangent) +
                     " does not match output shape");
  }
  const int h = input.height;
  const int w = input.width;

  if (input_grad != nullptr) {
    if (!input_grad->same_shape(input)) {
      throw ShapeError("conv2d_vjp: input gradient buffer has wrong shape");
    }
    // Correlation of the cotangent with the flipped, channel-transposed kernel.
    thread_local Kernel flipped;
    if (flipped.out_channels != k.in_channels ||
        flipped.in_channels != k.out_channels || flipped.kh != k.kh ||
        flipped.kw != k.kw) {
      flipped = Kernel(k.in_channels, k.out_channels, k.kh, k.kw);
    }
    for (int o = 0; o < k.out_channels; ++o) {
      for (int i = 0; i < k.in_channels; ++i) {
        for (int ky = 0; ky < k.kh; ++ky) {
          for (int kx = 0; kx < k.kw; ++kx) {
            flipped.w(i, o, k.kh - 1 - ky, k.kw - 1 - kx) = k.w(o, i, ky, kx);
          }
        }
      }
    }
    thread_local Field tmp;
    conv2d_into(cotangent, flipped, padding, tmp);
    add_into(*input_grad, tmp);
  }

  if (kernel_grad != nullptr) {
    if (kernel_grad->out_channels != k.out_channels ||
        kernel_grad->in_channels != k.in_channels || kernel_grad->kh != k.kh ||
        kernel_grad->kw != k.kw) {
      throw ShapeError("conv2d_vjp: kernel gradient buffer has wrong shape");
    }
    const int nchunks = (w + kLanes - 1) / kLanes;
    const int wr = nchunks * kLanes;
    const int hp = h + k.kh - 1;
    const int wp = wr + k.kw - 1;
    const std::size_t pp = static_cast<std::size_t>(hp) * wp;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    thread_local std::vector<double> padded;
    build_padded(input, k.kh, k.kw, padding, wp, padded);

    // Cotangent rows widened to whole vectors; the extra lanes are zero so
    // they contribute nothing to the dot products.
    const int blocks = (k.out_channels + 3) / 4;
    const std::size_t gplane = static_cast<std::size_t>(h) * wr;
    thread_local std::vector<double> gbuf;
    gbuf.assign(blocks * 4 * gplane, 0.0);
    for (int o = 0; o < k.out_channels; ++o) {
      for (int y = 0; y < h; ++y) {
        std::copy_n(cotangent.data.data() + o * plane + static_cast<std::size_t>(y) * w,
                    w, gbuf.data() + o * gplane + static_cast<std::size_t>(y) * wr);
      }
      if (kernel_grad->has_bias()) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += cotangent.data[o * plane + p];
        kernel_grad->bias[o] += s;
      }
    }

    constexpr int kMaxKw = 7;
    for (int b = 0; b < blocks; ++b) {
      const double* g0 = gbuf.data() + (b * 4) * gplane;
      for (int i = 0; i < k.in_channels; ++i) {
        for (int ky = 0; ky < k.kh; ++ky) {
          const double* src = padded.data() + i * pp + static_cast<std::size_t>(ky) * wp;
          double sums[4][kMaxKw] = {};
          if (k.kw == 3) {
            Vec acc[4][3] = {};
            for (int y = 0; y < h; ++y) {
              const double* s = src + static_cast<std::size_t>(y) * wp;
              const std::size_t r = static_cast<std::size_t>(y) * wr;
              for (int x = 0; x < wr; x += kLanes) {
                const Vec x0 = load(s + x);
                const Vec x1 = load(s + x + 1);
                const Vec x2 = load(s + x + 2);
                for (int c = 0; c < 4; ++c) {
                  const Vec gv = load(g0 + c * gplane + r + x);
                  acc[c][0] += gv * x0;
                  acc[c][1] += gv * x1;
                  acc[c][2] += gv * x2;
                }
              }
            }
            for (int c = 0; c < 4; ++c) {
              for (int kx = 0; kx < 3; ++kx) {
                double t = 0.0;
                for (int l = 0; l < kLanes; ++l) t += acc[c][kx][l];
                sums[c][kx] = t;
              }
            }
          } else {
            if (k.kw > kMaxKw) throw ShapeError("conv2d_vjp: kernel width above 7");
            for (int kx = 0; kx < k.kw; ++kx) {
              Vec acc[4] = {};
              for (int y = 0; y < h; ++y) {
                const double* s = src + static_cast<std::size_t>(y) * wp + kx;
                const std::size_t r = static_cast<std::size_t>(y) * wr;
                for (int x = 0; x < wr; x += kLanes) {
                  const Vec xv = load(s + x);
                  for (int c = 0; c < 4; ++c) acc[c] += load(g0 + c * gplane + r + x) * xv;
                }
              }
              for (int c = 0; c < 4; ++c) {
                double t = 0.0;
                for (int l = 0; l < kLanes; ++l) t += acc[c][l];
                sums[c][kx] = t;
              }
            }
          }
          for (int c = 0; c < 4; ++c) {
            const int o = b * 4 + c;
            if (o >= k.out_channels) break;
            for (int kx = 0; kx < k.kw; ++kx) kernel_grad->w(o, i, ky, kx) += sums[c][kx];
          }
        }
      }
    }
  }
}

Field window_vjp(const Field& cotangent, int height, int width) {
  return embed_centered(cotangent, height, width);
}

Field pad_vjp(const Field& cotangent, int height, int width) {
  if (height > cotangent.height || width > cotangent.width) {
    throw ShapeError("pad_vjp: crop larger than cotangent");
  }
  const int oy = (cotangent.height - height) / 2;
  const int ox = (cotangent.width - width) / 2;
  Field out(cotangent.channels, height, width);
  for (int c = 0; c < cotangent.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      std::copy_n(&cotangent.at(c, oy + y, ox), width, &out.at(c, y, 0));
    }
  }
  return out;
}

VelocityStack maxpool_vjp(const Field& cotangent,
                          std::span<const std::int32_t> argmax,
                          std::size_t velocities) {
  if (argmax.size() != cotangent.size()) {
    throw ShapeError("maxpool_vjp: argmax length does not match cotangent");
  }
  VelocityStack out(velocities, Field(cotangent.channels, cotangent.height,
                                      cotangent.width));
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    const auto v = static_cast<std::size_t>(argmax[i]);
    if (v >= velocities) throw ShapeError("maxpool_vjp: argmax out of range");
    out[v].data[i] = cotangent.data[i];
  }
  return out;
}

Field pointwise_vjp(const Field& input, const Field& cotangent, Activation fn) {
  if (!input.same_shape(cotangent)) {
    throw ShapeError("pointwise_vjp: cotangent " + shape_str(cotangent) +
                     " vs input " + shape_str(input));
  }
  Field out = cotangent;
  switch (fn) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(input.data[i] > 0.0)) out.data[i] = 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = apply(Activation::kSigmoid, input.data[i]);
        out.data[i] *= s * (1.0 - s);
      }
      break;
    case Activation::kIdentity:
      break;
  }
  return out;
}

void add_into(Field& dst, const Field& src) {
  if (!dst.same_shape(src)) {
    throw ShapeError("add: " + shape_str(dst) + " vs " + shape_str(src));
  }
  double* d = dst.data.data();
  const double* s = src.data.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void scale_into(Field& dst, double s) {
  for (double& v : dst.data) v *= s;
}

}  // namespace flowm::grid
