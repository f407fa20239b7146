#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "slide/tensor.hpp"

namespace slide::gradcheck {

/// Step used for central differences at double precision.
inline constexpr double kDefaultEps = 1e-5;
/// Relative tolerance between analytic and numeric gradients.
inline constexpr double kDefaultTolerance = 1e-4;
/// Elements where both gradients are below this magnitude pass outright.
inline constexpr double kAbsoluteFloor = 1e-8;

struct GradReport {
  std::string parameter_name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t num_elements_checked = 0;
  double tolerance = kDefaultTolerance;
  bool passed = false;
};

/// Ordered name -> tensor list; the order fixes the report order.
using NamedTensors = std::vector<std::pair<std::string, TensorD>>;

const TensorD* find(const NamedTensors& tensors, const std::string& name);

using ScalarFn = std::function<double(const TensorD&)>;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
/// element. Throws NumericError if f is non-finite at any probe point.
TensorD numeric_gradient(const ScalarFn& f, const TensorD& at, double eps = kDefaultEps);

/// Element-wise comparison. rel = |a - n| / max(|a|, |n|), skipping elements
/// where both magnitudes are under kAbsoluteFloor; passed iff max rel <= tol.
GradReport compare_gradients(const std::string& name, const TensorD& analytic, const TensorD& numeric,
                             double tol = kDefaultTolerance);

using ForwardFn = std::function<double(const NamedTensors&)>;
using BackwardFn = std::function<NamedTensors(const NamedTensors&)>;

/// Checks backward(params) against numeric gradients of forward for every
/// entry of params. A parameter missing from backward's result yields a
/// failed report.
std::vector<GradReport> check_gradients(const ForwardFn& forward, const BackwardFn& backward,
                                        const NamedTensors& params, double eps = kDefaultEps,
                                        double tol = kDefaultTolerance);

bool all_passed(const std::vector<GradReport>& reports);

/// sum(out * weights): turns a tensor-valued function into a scalar whose
/// gradient with respect to out is `weights`.
double scalarize(const TensorD& out, const TensorD& weights);

std::string reports_to_json(const std::vector<GradReport>& reports);
std::vector<GradReport> reports_from_json(const std::string& text);

}  // namespace slide::gradcheck
