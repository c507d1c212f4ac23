#pragma once

#include <functional>
#include <string>

#include "movie/graph.hpp"
#include "movie/optim.hpp"

namespace movie {

/// Raised when a gradient check encounters NaN on either side; the message
/// names the op under test.
class GradCheckError : public std::runtime_error {
public:
    explicit GradCheckError(const std::string& what) : std::runtime_error(what) {}
};

/// Compare reverse-mode gradients of a scalar-valued closure against central
/// finite differences.
///
/// The closure is re-run under perturbed parameters; passing a null graph
/// requests a pure forward pass. Returns the maximum over sampled
/// coordinates of |analytic - numeric| / max(1, |numeric|), probing at least
/// 32 random coordinates per parameter tensor. epsilon must lie in
/// [1e-7, 1e-3] and the closure must be deterministic.
double grad_check(const std::function<Tensor(Graph*)>& fn, ParamGroup& params, double epsilon,
                  uint64_t seed = 0, const std::string& op_name = "closure");

}  // namespace movie
