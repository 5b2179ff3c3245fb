#pragma once

#include <functional>
#include <vector>

#include "pcaudio/tensor.hpp"

namespace pcaudio {

// Compares analytic gradients of a deterministic scalar function against
// central finite differences. Returns the max over all parameter entries
// of |analytic - cd| / max(|analytic|, |cd|, 1e-12).
real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                real eps = 1e-5);

}  // namespace pcaudio
