#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ptcmil/tensor.hpp"

namespace ptcmil {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;      // name of the worst leaf ("" for unnamed)
  std::size_t worst_index = 0;  // flat index within that leaf
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  std::size_t scalars_checked = 0;
};

// Central-difference oracle: compares the reverse-mode gradient of
// build_loss() against (f(x+eps) - f(x-eps)) / (2 eps) for every scalar in
// params, in place. build_loss must rebuild the loss from the current
// parameter values and be deterministic. Relative error per scalar is
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, eps); the eps floor keeps difference
// cancellation noise on exactly-zero gradients from registering as error.
//
// fault_scale/fault_param form a test hook: the named parameter's autodiff
// gradient is scaled before comparison, so a harness can prove the check
// actually fails when gradients are wrong.
GradCheckReport finite_diff_check_detail(const std::function<Tensor()>& build_loss,
                                         const std::vector<Tensor>& params, double epsilon = 1e-5,
                                         double fault_scale = 1.0,
                                         const std::string& fault_param = "");

double finite_diff_check(const std::function<Tensor()>& build_loss,
                         const std::vector<Tensor>& params, double epsilon = 1e-5);

}  // namespace ptcmil
