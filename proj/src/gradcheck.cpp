#include "depthcast/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace depthcast {

GradCheckReport finite_diff_check(const std::function<double(const ParamVector&)>& f, const ParamVector& analytic,
                                  const ParamVector& point, const GradCheckOptions& opts) {
  if (!analytic.same_layout(point)) throw std::invalid_argument("finite_diff_check: gradient layout mismatch");
  GradCheckReport rep;
  ParamVector x = point;
  for (const auto& seg : point.segments()) {
    for (std::size_t j = 0; j < seg.size; ++j) {
      const std::size_t i = seg.offset + j;
      const double x0 = x.values()[i];
      x.values()[i] = x0 + opts.step;
      const double fp = f(x);
      x.values()[i] = x0 - opts.step;
      const double fm = f(x);
      x.values()[i] = x0;

      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = analytic.values()[i];
      double err = std::abs(a - numeric) / std::max(std::abs(numeric), opts.abs_floor);
      if (!std::isfinite(err)) err = INFINITY;
      ++rep.checked;
      const std::string name = seg.name + "[" + std::to_string(j) + "]";
      if (err > rep.max_rel_error || rep.worst.empty()) {
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        if (err >= rep.max_rel_error) rep.worst = name;
      }
      if (!(err <= opts.rel_tol)) {
        rep.passed = false;
        if (rep.failing.size() < opts.max_failures_listed) rep.failing.push_back(name);
      }
    }
  }
  return rep;
}

}  // namespace depthcast
