#include "rift/optim.hpp"

#include <cmath>

#include "rift/error.hpp"

namespace rift {

Adam::Adam(ParamSet params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw ValidationError("adam: learning rate must be positive");
  for (const auto& p : params_.items()) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const auto items = params_.items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    Var p = items[k].var;
    if (!p.has_grad()) continue;
    const Tensor& g = p.grad();
    Tensor& w = p.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

void Adam::export_state(const std::string& prefix, std::vector<NamedTensor>& out) const {
  const auto items = params_.items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    out.push_back({prefix + "m/" + items[k].name, m_[k]});
    out.push_back({prefix + "v/" + items[k].name, v_[k]});
  }
}

void Adam::import_state(const std::string& prefix, const Checkpoint& ckpt, long steps) {
  const auto items = params_.items();
  for (std::size_t k = 0; k < items.size(); ++k) {
    const Tensor& m = ckpt.array(prefix + "m/" + items[k].name);
    const Tensor& v = ckpt.array(prefix + "v/" + items[k].name);
    if (!m.same_shape(m_[k]) || !v.same_shape(v_[k])) {
      throw ValidationError("adam: state shape mismatch for " + items[k].name);
    }
    m_[k] = m;
    v_[k] = v;
  }
  steps_ = steps;
}

}  // namespace rift
