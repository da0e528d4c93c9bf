#pragma once

// Hand-rolled generators and loop oracles shared by the unit tests and the
// acceptance binary.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <functional>
#include <random>
#include <vector>

#include "rift/autograd.hpp"
#include "rift/losses.hpp"
#include "rift/mask.hpp"
#include "rift/networks.hpp"
#include "rift/ops.hpp"
#include "rift/rin.hpp"

namespace rift_test {

using namespace rift;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline RegionMask random_mask(int h, int w, int regions, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, regions - 1);
  std::vector<int> labels(static_cast<std::size_t>(h) * w);
  for (int& l : labels) l = pick(rng);
  return RegionMask(h, w, regions, std::move(labels));
}

// Blocky mask: labels constant on 2x2 cells, so nearest downsampling keeps
// every region visible at half resolution.
inline RegionMask random_block_mask(int h, int w, int regions, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, regions - 1);
  std::vector<int> cells(static_cast<std::size_t>((h + 1) / 2) * ((w + 1) / 2));
  for (int& l : cells) l = pick(rng);
  std::vector<int> labels(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) labels[static_cast<std::size_t>(y) * w + x] = cells[(y / 2) * ((w + 1) / 2) + x / 2];
  return RegionMask(h, w, regions, std::move(labels));
}

inline MaskBatch random_masks(int n, int h, int w, int regions, std::mt19937_64& rng) {
  MaskBatch out;
  for (int i = 0; i < n; ++i) out.push_back(random_mask(h, w, regions, rng));
  return out;
}

inline std::vector<OneHotMask> onehots(const MaskBatch& masks) {
  std::vector<OneHotMask> out;
  for (const auto& m : masks) out.push_back(to_onehot(m));
  return out;
}

// Per-pixel region-wise normalization: two-pass channel moments over
// (N, H, W), then sum over regions of mask_i * (xn * (1 + gamma_i) + beta_i).
inline Tensor rin_oracle(const Tensor& f, const MaskBatch& masks, const Tensor& gamma, const Tensor& beta,
                         double eps = kRinEpsilon) {
  const int N = f.dim(0), C = f.dim(1), H = f.dim(2), W = f.dim(3);
  const int R = gamma.dim(1);
  Tensor out(f.shape(), 0.0);
  for (int c = 0; c < C; ++c) {
    long double sum = 0.0L;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) sum += f.at(n, c, y, x);
    const long double mu = sum / (static_cast<long double>(N) * H * W);
    long double sq = 0.0L;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) sq += (f.at(n, c, y, x) - mu) * (f.at(n, c, y, x) - mu);
    const long double sigma = std::sqrt(sq / (static_cast<long double>(N) * H * W) + eps);
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const long double xn = (f.at(n, c, y, x) - mu) / sigma;
          long double v = 0.0L;
          for (int i = 0; i < R; ++i) {
            const long double in = masks[n].label(y, x) == i ? 1.0L : 0.0L;
            const std::size_t k = (static_cast<std::size_t>(n) * R + i) * C + c;
            v += in * (xn * (1.0L + gamma[k]) + beta[k]);
          }
          out.at(n, c, y, x) = static_cast<double>(v);
        }
  }
  return out;
}

// Random linear functional of a tensor-valued op, so any output can be
// pushed through backward().
inline Var project(const Var& out, const Tensor& weights) { return ops::mean(ops::mul(out, Var::constant(weights))); }

struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
  long checked = 0;
};

// Central differences on every element of every leaf; `fn` must rebuild the
// graph from the leaves' current values. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheck grad_check(const std::function<Var()>& fn, std::vector<Var> leaves, double h = 1e-6,
                            double floor = 1e-3, long max_per_leaf = -1) {
  for (Var& v : leaves) {
    v.set_requires_grad(true);
    v.zero_grad();
  }
  backward(fn());
  std::vector<Tensor> analytic;
  for (Var& v : leaves) analytic.push_back(v.has_grad() ? v.grad() : Tensor(v.shape(), 0.0));
  GradCheck r;
  NoGradGuard no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor& val = leaves[l].mutable_value();
    const long n = static_cast<long>(val.numel());
    const long stride = max_per_leaf > 0 && n > max_per_leaf ? n / max_per_leaf : 1;
    for (long i = 0; i < n; i += stride) {
      const double keep = val[i];
      val[i] = keep + h;
      const double fp = fn().value()[0];
      val[i] = keep - h;
      const double fm = fn().value()[0];
      val[i] = keep;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[l][i];
      const double diff = std::abs(a - num);
      r.max_abs = std::max(r.max_abs, diff);
      r.max_rel = std::max(r.max_rel, diff / std::max({std::abs(a), std::abs(num), floor}));
      ++r.checked;
    }
  }
  return r;
}

// Random symmetric positive semi-definite matrix with some rank deficiency
// when rank < d.
inline Eigen::MatrixXd random_psd(int d, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(d, rank);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = g(rng);
  return a * a.transpose() / static_cast<double>(rank);
}

// Fréchet distance via a general (non-symmetric) eigensolver on S_a S_b in
// long double: Tr (S_a S_b)^{1/2} = sum sqrt(lambda_k).
inline long double frechet_oracle(const Eigen::VectorXd& ma, const Eigen::MatrixXd& sa, const Eigen::VectorXd& mb,
                                  const Eigen::MatrixXd& sb) {
  using M = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const M a = sa.cast<long double>(), b = sb.cast<long double>();
  Eigen::EigenSolver<M> es(a * b, false);
  long double tr_root = 0.0L;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    tr_root += std::sqrt(std::max(es.eigenvalues()[k].real(), 0.0L));
  }
  const long double mean_term = (ma.cast<long double>() - mb.cast<long double>()).squaredNorm();
  return std::max(mean_term + a.trace() + b.trace() - 2.0L * tr_root, 0.0L);
}

inline ArchConfig tiny_arch(int size = 16) {
  ArchConfig a;
  a.image_size = size;
  a.base_channels = 8;
  a.style_dim = 4;
  a.num_regions = 3;
  a.num_domains = 2;
  return a;
}

// Small differentiable stand-ins for the networks on 1x3x4x4 inputs.
struct MockNets {
  Var trunk_w, trunk_b, head_w, gen_w;
  explicit MockNets(std::mt19937_64& rng)
      : trunk_w(Var::parameter(random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5))),
        trunk_b(Var::parameter(random_tensor({4}, rng))),
        head_w(Var::parameter(random_tensor({2, 4, 1, 1}, rng))),
        gen_w(Var::parameter(random_tensor({3, 3, 3, 3}, rng, -0.5, 0.5))) {}

  Var trunk(const Var& img) const { return ops::leaky_relu(ops::conv2d(img, trunk_w, trunk_b, 1, 1), 0.2); }
  LogitFn logits() const {
    return [this](const Var& img, std::span<const int> d) {
      return ops::select_channel(ops::conv2d(trunk(img), head_w, Var(), 1, 0), d);
    };
  }
  FeatureFn features() const {
    return [this](const Var& img) { return ops::spatial_mean(trunk(img)); };
  }
  GeneratorFn generator() const {
    return [this](const Var& x, const MaskBatch&, const Var& s, const MaskBatch&) {
      return ops::tanh(ops::add(ops::conv2d(x, gen_w, Var(), 1, 1), ops::scale(s, 0.5)));
    };
  }
};

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& group, const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rift_" + group) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every regular file under `root` with its bytes, keyed by relative path.
inline std::vector<std::pair<std::string, std::string>> tree_bytes(const std::filesystem::path& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.emplace_back(std::filesystem::relative(e.path(), root).string(), file_bytes(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rift_test
