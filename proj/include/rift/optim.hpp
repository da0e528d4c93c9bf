#pragma once

#include <string>
#include <vector>

#include "rift/layers.hpp"
#include "rift/networks.hpp"

namespace rift {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed ParamSet. Parameters without a gradient
// in a step are left untouched.
class Adam {
 public:
  Adam() = default;
  Adam(ParamSet params, AdamConfig config);

  void step();
  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  void export_state(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void import_state(const std::string& prefix, const Checkpoint& ckpt, long steps);

 private:
  ParamSet params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  long steps_ = 0;
};

}  // namespace rift
