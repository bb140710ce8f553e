#include "stvg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stvg/errors.hpp"
#include "stvg/tape.hpp"

namespace stvg {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << ": max relative error " << max_rel_err << " over "
     << coords_checked << " coordinates (" << zero_pairs << " zero pairs)";
  if (!pass) {
    os << "; worst at " << worst.tensor << "[" << worst.index << "] analytic " << worst.analytic
       << " vs fd " << worst.fd;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::span<const NamedParam> params, const GradCheckOptions& opt) {
  // Analytic pass on a fresh tape.
  for (const auto& p : params) p.tensor.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f();
    if (loss.numel() != 1) {
      throw ConfigError("grad_check: objective must be scalar, got shape " +
                        shape_str(loss.shape()));
    }
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      auto g = p.tensor.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);
    }
    p.tensor.zero_grad();
  }

  GradCheckReport report;
  Rng rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& p = params[pi];
    const std::size_t n = p.tensor.numel();
    std::vector<std::size_t> coords;
    if (n <= opt.coords_per_tensor) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::set<std::size_t> picked;
      while (picked.size() < opt.coords_per_tensor) picked.insert(rng.below(n));
      coords.assign(picked.begin(), picked.end());
    }
    Tensor t = p.tensor;
    auto buf = t.mutable_value();
    for (std::size_t idx : coords) {
      const double saved = buf[idx];
      buf[idx] = saved + opt.step;
      const double fp = f().item();
      buf[idx] = saved - opt.step;
      const double fm = f().item();
      buf[idx] = saved;
      const double fd = (fp - fm) / (2.0 * opt.step);
      const double a = analytic[pi][idx];

      GradCheckCoord c{p.name, idx, a, fd, 0.0};
      const double mag = std::max(std::abs(a), std::abs(fd));
      if (mag < opt.zero_band) {
        ++report.zero_pairs;
      } else {
        c.rel_err = std::abs(a - fd) / mag;
      }
      ++report.coords_checked;
      if (c.rel_err > report.max_rel_err) {
        report.max_rel_err = c.rel_err;
        report.worst = c;
      }
      if (c.rel_err >= opt.tol) {
        report.pass = false;
        if (report.failures.size() < 16) report.failures.push_back(c);
      }
    }
  }
  return report;
}

}  // namespace stvg
