#include "pcaudio/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pcaudio {

real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, real eps) {
  for (const Tensor& p : params) p.impl()->grad.clear();
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<real>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(p.impl()->grad);

  real worst = 0;
  NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const real saved = p.data()[i];
      p.data()[i] = saved + eps;
      const real up = f().value();
      p.data()[i] = saved - eps;
      const real down = f().value();
      p.data()[i] = saved;
      const real cd = (up - down) / (2 * eps);
      const real a = analytic[pi].empty() ? real(0) : analytic[pi][i];
      const real denom = std::max({std::fabs(a), std::fabs(cd), real(1e-12)});
      worst = std::max(worst, std::fabs(a - cd) / denom);
    }
  }
  return worst;
}

}  // namespace pcaudio
