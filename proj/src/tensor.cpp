#include "rift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rift/error.hpp"

namespace rift {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ValidationError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ValidationError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                          shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ValidationError("max_abs_diff: shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::array<int, 4> nchw(const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    throw ValidationError(std::string(what) + ": expected NCHW tensor, got " + shape_string(t.shape()));
  }
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

Tensor take_sample(const Tensor& batch, int n) {
  auto [N, C, H, W] = nchw(batch, "take_sample");
  if (n < 0 || n >= N) throw ValidationError("take_sample: index " + std::to_string(n) + " out of range");
  const std::size_t per = static_cast<std::size_t>(C) * H * W;
  std::vector<double> v(batch.data() + per * n, batch.data() + per * (n + 1));
  return Tensor({1, C, H, W}, std::move(v));
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ValidationError("concat_batch: no tensors");
  auto [N0, C, H, W] = nchw(parts.front(), "concat_batch");
  (void)N0;
  int total = 0;
  std::vector<double> v;
  for (const Tensor& p : parts) {
    auto [n, c, h, w] = nchw(p, "concat_batch");
    if (c != C || h != H || w != W) {
      throw ValidationError("concat_batch: mismatched shape " + shape_string(p.shape()));
    }
    total += n;
    v.insert(v.end(), p.values().begin(), p.values().end());
  }
  return Tensor({total, C, H, W}, std::move(v));
}

}  // namespace rift
