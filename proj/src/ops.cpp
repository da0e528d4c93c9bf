#include "rift/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "rift/error.hpp"

namespace rift::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

// Unfolds k x k patches of a C x H x W image into a (C*k*k) x (Ho*Wo) matrix.
void im2col(const double* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* out = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + Wo, 0.0);
            continue;
          }
          const double* in = img + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < W) ? in[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds columns back into the image.
void col2im(const double* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, double* img) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          double* out = img + (static_cast<std::size_t>(c) * H + iy) * W;
          const double* in = row + oy * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(int k, int stride, int pad) { return k == 1 && stride == 1 && pad == 0; }

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {a, b}, [na, nb](const Tensor& g) {
    accumulate(na, g);
    accumulate(nb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {a, b}, [na, nb](const Tensor& g) {
    accumulate(na, g);
    if (nb->requires_grad) {
      Tensor& gb = nb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_result(std::move(out), {a, b}, [na, nb](const Tensor& g) {
    if (na->requires_grad) {
      Tensor& ga = na->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * nb->value[i];
    }
    if (nb->requires_grad) {
      Tensor& gb = nb->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * na->value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  NodePtr na = a.node();
  return make_result(std::move(out), {a}, [na, factor](const Tensor& g) {
    Tensor& ga = na->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, double slope) {
  Tensor out(x.shape());
  const Tensor& v = x.value();
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] > 0.0 ? v[i] : slope * v[i];
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [nx, slope](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    const Tensor& v = nx->value;
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += v[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var tanh(const Var& x) {
  Tensor out(x.shape());
  const Tensor& v = x.value();
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = std::tanh(v[i]);
  NodePtr nx = x.node();
  Tensor saved = out;
  return make_result(std::move(out), {x}, [nx, saved = std::move(saved)](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - saved[i] * saved[i]);
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  auto [N, Cin, H, W] = nchw(x.value(), "conv2d input");
  auto [Cout, wCin, k, k2] = nchw(weight.value(), "conv2d weight");
  if (wCin != Cin || k != k2) {
    throw ValidationError("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                          shape_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{Cout}) throw ValidationError("conv2d: bias shape mismatch");
  if (stride < 1 || pad < 0) throw ValidationError("conv2d: invalid stride/pad");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ValidationError("conv2d: kernel larger than padded input");

  const int ckk = Cin * k * k;
  const int hw = Ho * Wo;
  const bool pointwise = is_pointwise(k, stride, pad);
  Tensor out({N, Cout, Ho, Wo});
  std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * hw);
  ConstMatMap wmat(weight.value().data(), Cout, ckk);
  for (int n = 0; n < N; ++n) {
    const double* img = x.value().data() + static_cast<std::size_t>(n) * Cin * H * W;
    const double* cols = img;
    if (!pointwise) {
      im2col(img, Cin, H, W, k, stride, pad, Ho, Wo, col.data());
      cols = col.data();
    }
    MatMap o(out.data() + static_cast<std::size_t>(n) * Cout * hw, Cout, hw);
    o.noalias() = wmat * ConstMatMap(cols, ckk, hw);
    if (bias.defined()) {
      for (int c = 0; c < Cout; ++c) o.row(c).array() += bias.value()[c];
    }
  }

  NodePtr nx = x.node(), nw = weight.node(), nb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [=](const Tensor& g) {
    std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * hw);
    std::vector<double> dcol(static_cast<std::size_t>(ckk) * hw);
    ConstMatMap wmat(nw->value.data(), Cout, ckk);
    for (int n = 0; n < N; ++n) {
      ConstMatMap gn(g.data() + static_cast<std::size_t>(n) * Cout * hw, Cout, hw);
      if (nb && nb->requires_grad) {
        Tensor& gb = nb->grad_buffer();
        const double* gp = g.data() + static_cast<std::size_t>(n) * Cout * hw;
        for (int c = 0; c < Cout; ++c) {
          double acc = 0.0;
          for (int i = 0; i < hw; ++i) acc += gp[static_cast<std::size_t>(c) * hw + i];
          gb[c] += acc;
        }
      }
      const double* img = nx->value.data() + static_cast<std::size_t>(n) * Cin * H * W;
      if (nw->requires_grad) {
        const double* cols = img;
        if (!pointwise) {
          im2col(img, Cin, H, W, k, stride, pad, Ho, Wo, col.data());
          cols = col.data();
        }
        MatMap gw(nw->grad_buffer().data(), Cout, ckk);
        gw.noalias() += gn * ConstMatMap(cols, ckk, hw).transpose();
      }
      if (nx->requires_grad) {
        double* gimg = nx->grad_buffer().data() + static_cast<std::size_t>(n) * Cin * H * W;
        if (pointwise) {
          MatMap(gimg, Cin, hw).noalias() += wmat.transpose() * gn;
        } else {
          MatMap(dcol.data(), ckk, hw).noalias() = wmat.transpose() * gn;
          col2im(dcol.data(), Cin, H, W, k, stride, pad, Ho, Wo, gimg);
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  auto [N, Cin, H, W] = nchw(x.value(), "conv_transpose2d input");
  auto [wCin, Cout, k, k2] = nchw(weight.value(), "conv_transpose2d weight");
  if (wCin != Cin || k != k2) {
    throw ValidationError("conv_transpose2d: weight " + shape_string(weight.shape()) +
                          " incompatible with input " + shape_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{Cout}) {
    throw ValidationError("conv_transpose2d: bias shape mismatch");
  }
  const int Ho = (H - 1) * stride - 2 * pad + k;
  const int Wo = (W - 1) * stride - 2 * pad + k;
  if (Ho < 1 || Wo < 1 || (Ho + 2 * pad - k) / stride + 1 != H) {
    throw ValidationError("conv_transpose2d: invalid geometry");
  }
  const int ckk = Cout * k * k;
  const int hw = H * W;
  Tensor out({N, Cout, Ho, Wo});
  std::vector<double> col(static_cast<std::size_t>(ckk) * hw);
  ConstMatMap wmat(weight.value().data(), Cin, ckk);
  for (int n = 0; n < N; ++n) {
    ConstMatMap xn(x.value().data() + static_cast<std::size_t>(n) * Cin * hw, Cin, hw);
    MatMap(col.data(), ckk, hw).noalias() = wmat.transpose() * xn;
    double* o = out.data() + static_cast<std::size_t>(n) * Cout * Ho * Wo;
    col2im(col.data(), Cout, Ho, Wo, k, stride, pad, H, W, o);
    if (bias.defined()) {
      for (int c = 0; c < Cout; ++c) {
        double* plane = o + static_cast<std::size_t>(c) * Ho * Wo;
        for (int i = 0; i < Ho * Wo; ++i) plane[i] += bias.value()[c];
      }
    }
  }

  NodePtr nx = x.node(), nw = weight.node(), nb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [=](const Tensor& g) {
    std::vector<double> gcol(static_cast<std::size_t>(ckk) * hw);
    ConstMatMap wmat(nw->value.data(), Cin, ckk);
    for (int n = 0; n < N; ++n) {
      const double* gn = g.data() + static_cast<std::size_t>(n) * Cout * Ho * Wo;
      if (nb && nb->requires_grad) {
        Tensor& gb = nb->grad_buffer();
        for (int c = 0; c < Cout; ++c) {
          const double* plane = gn + static_cast<std::size_t>(c) * Ho * Wo;
          double s = 0.0;
          for (int i = 0; i < Ho * Wo; ++i) s += plane[i];
          gb[c] += s;
        }
      }
      if (!nw->requires_grad && !nx->requires_grad) continue;
      im2col(gn, Cout, Ho, Wo, k, stride, pad, H, W, gcol.data());
      ConstMatMap gc(gcol.data(), ckk, hw);
      if (nw->requires_grad) {
        ConstMatMap xn(nx->value.data() + static_cast<std::size_t>(n) * Cin * hw, Cin, hw);
        MatMap(nw->grad_buffer().data(), Cin, ckk).noalias() += xn * gc.transpose();
      }
      if (nx->requires_grad) {
        MatMap(nx->grad_buffer().data() + static_cast<std::size_t>(n) * Cin * hw, Cin, hw).noalias() +=
            wmat * gc;
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  auto [N, C, H, W] = nchw(x.value(), "upsample_nearest2x");
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx) out.at(n, c, y, xx) = x.value().at(n, c, y / 2, xx / 2);
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
          for (int xx = 0; xx < 2 * W; ++xx) gx.at(n, c, y / 2, xx / 2) += g.at(n, c, y, xx);
  });
}

Var avg_pool2x(const Var& x) {
  auto [N, C, H, W] = nchw(x.value(), "avg_pool2x");
  if (H % 2 || W % 2) throw ValidationError("avg_pool2x: odd spatial size " + shape_string(x.shape()));
  const int Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  const Tensor& v = x.value();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx) {
          out.at(n, c, y, xx) = 0.25 * (v.at(n, c, 2 * y, 2 * xx) + v.at(n, c, 2 * y, 2 * xx + 1) +
                                        v.at(n, c, 2 * y + 1, 2 * xx) + v.at(n, c, 2 * y + 1, 2 * xx + 1));
        }
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) gx.at(n, c, y, xx) += 0.25 * g.at(n, c, y / 2, xx / 2);
  });
}

Var instance_norm(const Var& x, double eps) {
  auto [N, C, H, W] = nchw(x.value(), "instance_norm");
  const int hw = H * W;
  Tensor out(x.shape());
  std::vector<double> mu(static_cast<std::size_t>(N) * C), sigma(mu.size());
  for (int p = 0; p < N * C; ++p) {
    const double* v = x.value().data() + static_cast<std::size_t>(p) * hw;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < hw; ++i) {
      s += v[i];
      s2 += v[i] * v[i];
    }
    const double m = s / hw;
    mu[p] = m;
    sigma[p] = std::sqrt(std::max(s2 / hw - m * m, 0.0) + eps);
    double* o = out.data() + static_cast<std::size_t>(p) * hw;
    for (int i = 0; i < hw; ++i) o[i] = (v[i] - m) / sigma[p];
  }
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int p = 0; p < N * C; ++p) {
      const double* v = nx->value.data() + static_cast<std::size_t>(p) * hw;
      const double* gp = g.data() + static_cast<std::size_t>(p) * hw;
      double gsum = 0.0, gdot = 0.0;
      for (int i = 0; i < hw; ++i) {
        gsum += gp[i];
        gdot += gp[i] * (v[i] - mu[p]);
      }
      const double gmean = gsum / hw, gcov = gdot / hw, s = sigma[p];
      double* out = gx.data() + static_cast<std::size_t>(p) * hw;
      for (int i = 0; i < hw; ++i) out[i] += (gp[i] - gmean) / s - (v[i] - mu[p]) * gcov / (s * s * s);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (weight.value().rank() != 2) throw ValidationError("linear: weight must be 2-D");
  const int dout = weight.dim(0), din = weight.dim(1);
  if (x.value().rank() < 1 || x.shape().back() != din) {
    throw ValidationError("linear: input " + shape_string(x.shape()) + " does not end in width " +
                          std::to_string(din));
  }
  if (bias.defined() && bias.shape() != Shape{dout}) throw ValidationError("linear: bias shape mismatch");
  const int rows = static_cast<int>(x.value().numel() / din);
  Shape oshape = x.shape();
  oshape.back() = dout;
  Tensor out(oshape);
  MatMap o(out.data(), rows, dout);
  o.noalias() = ConstMatMap(x.value().data(), rows, din) * ConstMatMap(weight.value().data(), dout, din).transpose();
  if (bias.defined()) {
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < dout; ++j) o(r, j) += bias.value()[j];
  }
  NodePtr nx = x.node(), nw = weight.node(), nb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(std::move(out), parents, [=](const Tensor& g) {
    ConstMatMap gm(g.data(), rows, dout);
    if (nx->requires_grad) {
      MatMap(nx->grad_buffer().data(), rows, din).noalias() += gm * ConstMatMap(nw->value.data(), dout, din);
    }
    if (nw->requires_grad) {
      MatMap(nw->grad_buffer().data(), dout, din).noalias() +=
          gm.transpose() * ConstMatMap(nx->value.data(), rows, din);
    }
    if (nb && nb->requires_grad) {
      Tensor& gb = nb->grad_buffer();
      for (int j = 0; j < dout; ++j) {
        double acc = 0.0;
        for (int r = 0; r < rows; ++r) acc += gm(r, j);
        gb[j] += acc;
      }
    }
  });
}

Var slice_last(const Var& x, int begin, int count) {
  const int width = x.shape().back();
  if (begin < 0 || count < 0 || begin + count > width) throw ValidationError("slice_last: range out of bounds");
  const int rows = static_cast<int>(x.value().numel() / width);
  Shape oshape = x.shape();
  oshape.back() = count;
  Tensor out(oshape);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < count; ++j)
      out[static_cast<std::size_t>(r) * count + j] = x.value()[static_cast<std::size_t>(r) * width + begin + j];
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < count; ++j)
        gx[static_cast<std::size_t>(r) * width + begin + j] += g[static_cast<std::size_t>(r) * count + j];
  });
}

Var spatial_mean(const Var& x) {
  auto [N, C, H, W] = nchw(x.value(), "spatial_mean");
  const int hw = H * W;
  Tensor out({N, C});
  for (int p = 0; p < N * C; ++p) {
    const double* v = x.value().data() + static_cast<std::size_t>(p) * hw;
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += v[i];
    out[p] = s / hw;
  }
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int p = 0; p < N * C; ++p) {
      double* o = gx.data() + static_cast<std::size_t>(p) * hw;
      for (int i = 0; i < hw; ++i) o[i] += g[p] / hw;
    }
  });
}

Var select_channel(const Var& x, std::span<const int> index) {
  auto [N, K, H, W] = nchw(x.value(), "select_channel");
  if (static_cast<int>(index.size()) != N) throw ValidationError("select_channel: one index per sample required");
  for (int i : index) {
    if (i < 0 || i >= K) {
      throw ValidationError("select_channel: index " + std::to_string(i) + " outside 0.." + std::to_string(K - 1));
    }
  }
  const int hw = H * W;
  std::vector<int> idx(index.begin(), index.end());
  Tensor out({N, 1, H, W});
  for (int n = 0; n < N; ++n)
    std::copy_n(x.value().data() + (static_cast<std::size_t>(n) * K + idx[n]) * hw, hw,
                out.data() + static_cast<std::size_t>(n) * hw);
  NodePtr nx = x.node();
  return make_result(std::move(out), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (int n = 0; n < N; ++n) {
      double* o = gx.data() + (static_cast<std::size_t>(n) * K + idx[n]) * hw;
      for (int i = 0; i < hw; ++i) o[i] += g[static_cast<std::size_t>(n) * hw + i];
    }
  });
}

Var mean(const Var& x) {
  const std::size_t m = x.value().numel();
  if (m == 0) throw ValidationError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  NodePtr nx = x.node();
  return make_result(Tensor({1}, s / m), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) gx[i] += g[0] / m;
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a, b, "mean_abs_diff");
  return weighted_abs_diff(a, b, Tensor(a.shape(), 1.0));
}

Var weighted_abs_diff(const Var& a, const Var& b, const Tensor& weights) {
  require_same_shape(a, b, "weighted_abs_diff");
  if (weights.shape() != a.shape()) throw ValidationError("weighted_abs_diff: weight shape mismatch");
  const std::size_t m = a.value().numel();
  if (m == 0) throw ValidationError("weighted_abs_diff: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += weights[i] * std::abs(a.value()[i] - b.value()[i]);
  NodePtr na = a.node(), nb = b.node();
  return make_result(Tensor({1}, s / m), {a, b}, [=](const Tensor& g) {
    const double gs = g[0] / m;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = na->value[i] - nb->value[i];
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      const double v = gs * weights[i] * sign;
      if (na->requires_grad) na->grad_buffer()[i] += v;
      if (nb->requires_grad) nb->grad_buffer()[i] -= v;
    }
  });
}

Var mean_softplus(const Var& x, double sign) {
  const std::size_t m = x.value().numel();
  if (m == 0) throw ValidationError("mean_softplus: empty tensor");
  double s = 0.0;
  for (double v : x.value().values()) {
    const double z = sign * v;
    s += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
  }
  NodePtr nx = x.node();
  return make_result(Tensor({1}, s / m), {x}, [=](const Tensor& g) {
    Tensor& gx = nx->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double z = sign * nx->value[i];
      const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      gx[i] += g[0] / m * sign * sig;
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  if (logits.value().rank() != 2) throw ValidationError("softmax_cross_entropy: logits must be [N,K]");
  const int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N) throw ValidationError("softmax_cross_entropy: label count mismatch");
  Tensor prob({N, K});
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    if (labels[n] < 0 || labels[n] >= K) throw ValidationError("softmax_cross_entropy: label out of range");
    const double* l = logits.value().data() + static_cast<std::size_t>(n) * K;
    const double mx = *std::max_element(l, l + K);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(l[k] - mx);
    for (int k = 0; k < K; ++k) prob[static_cast<std::size_t>(n) * K + k] = std::exp(l[k] - mx) / z;
    loss += -(l[labels[n]] - mx - std::log(z));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  NodePtr nl = logits.node();
  return make_result(Tensor({1}, loss / N), {logits}, [=](const Tensor& g) {
    Tensor& gl = nl->grad_buffer();
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) {
        const std::size_t i = static_cast<std::size_t>(n) * K + k;
        gl[i] += g[0] / N * (prob[i] - (k == lab[n] ? 1.0 : 0.0));
      }
  });
}

}  // namespace rift::ops
