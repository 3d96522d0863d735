#include "ptcmil/gradcheck.hpp"

#include <cmath>

#include "ptcmil/error.hpp"

namespace ptcmil {

GradCheckReport finite_diff_check_detail(const std::function<Tensor()>& build_loss,
                                         const std::vector<Tensor>& params, double epsilon,
                                         double fault_scale, const std::string& fault_param) {
  if (epsilon <= 0.0) {
    throw ValueError("finite_diff_check: epsilon must be positive");
  }

  // Reverse-mode gradients at the unperturbed point.
  std::vector<std::vector<double>> ad_grads;
  {
    Graph graph;
    GraphScope scope(graph);
    for (Tensor p : params) {
      p.zero_grad();
    }
    Tensor loss = build_loss();
    if (!std::isfinite(loss.item())) {
      throw NumericError("finite_diff_check: loss is not finite at the base point");
    }
    graph.backward(loss);
  }
  ad_grads.reserve(params.size());
  for (Tensor p : params) {
    std::vector<double> g = p.grad();
    if (!fault_param.empty() && p.name() == fault_param) {
      for (double& v : g) {
        v *= fault_scale;
      }
    }
    ad_grads.push_back(std::move(g));
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto& vals = p.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double f_plus = build_loss().item();
      vals[i] = saved - epsilon;
      const double f_minus = build_loss().item();
      vals[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericError("finite_diff_check: non-finite loss while perturbing '" +
                           (p.name().empty() ? std::string("<unnamed>") : p.name()) + "' at index " +
                           std::to_string(i));
      }
      const double fd = (f_plus - f_minus) / (2.0 * epsilon);
      const double ad = ad_grads[pi][i];
      // The floor absorbs central-difference cancellation noise (~ulp(loss) /
      // 2 eps) on coordinates whose true gradient is exactly zero, e.g. the
      // attention key bias, which softmax shift-invariance cancels.
      const double denom = std::max({std::abs(ad), std::abs(fd), epsilon});
      const double rel = std::abs(ad - fd) / denom;
      ++report.scalars_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p.name();
        report.worst_index = i;
        report.worst_ad = ad;
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

double finite_diff_check(const std::function<Tensor()>& build_loss,
                         const std::vector<Tensor>& params, double epsilon) {
  return finite_diff_check_detail(build_loss, params, epsilon).max_rel_error;
}

}  // namespace ptcmil
