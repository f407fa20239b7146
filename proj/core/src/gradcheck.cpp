#include "slide/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "slide/error.hpp"

namespace slide::gradcheck {

const TensorD* find(const NamedTensors& tensors, const std::string& name) {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& e) { return e.first == name; });
  return it == tensors.end() ? nullptr : &it->second;
}

TensorD numeric_gradient(const ScalarFn& f, const TensorD& at, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
  TensorD probe = at;
  TensorD grad(at.shape());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double plus = f(probe);
    probe[i] = orig - eps;
    const double minus = f(probe);
    probe[i] = orig;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("non-finite function value while differentiating element " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

GradReport compare_gradients(const std::string& name, const TensorD& analytic, const TensorD& numeric, double tol) {
  GradReport r;
  r.parameter_name = name;
  r.tolerance = tol;
  if (analytic.shape() != numeric.shape()) {
    r.max_rel_error = r.max_abs_error = std::numeric_limits<double>::infinity();
    r.passed = false;
    return r;
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::abs(a - n);
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    ++r.num_elements_checked;
    if (std::abs(a) < kAbsoluteFloor && std::abs(n) < kAbsoluteFloor) continue;
    r.max_rel_error = std::max(r.max_rel_error, abs_err / std::max(std::abs(a), std::abs(n)));
  }
  r.passed = r.max_rel_error <= tol;
  return r;
}

std::vector<GradReport> check_gradients(const ForwardFn& forward, const BackwardFn& backward,
                                        const NamedTensors& params, double eps, double tol) {
  const NamedTensors analytic = backward(params);
  std::vector<GradReport> reports;
  reports.reserve(params.size());
  for (std::size_t idx = 0; idx < params.size(); ++idx) {
    const std::string& name = params[idx].first;
    NamedTensors work = params;
    const TensorD numeric = numeric_gradient(
        [&](const TensorD& probe) {
          work[idx].second = probe;
          return forward(work);
        },
        params[idx].second, eps);
    if (const TensorD* a = find(analytic, name)) {
      reports.push_back(compare_gradients(name, *a, numeric, tol));
    } else {
      GradReport missing;
      missing.parameter_name = name;
      missing.tolerance = tol;
      missing.max_rel_error = missing.max_abs_error = std::numeric_limits<double>::infinity();
      missing.passed = false;
      reports.push_back(missing);
    }
  }
  return reports;
}

bool all_passed(const std::vector<GradReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.passed; });
}

double scalarize(const TensorD& out, const TensorD& weights) {
  if (out.shape() != weights.shape()) throw ShapeError("scalarize: weights must match output shape");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

namespace {

// JSON has no infinity; non-finite errors are written as null.
nlohmann::ordered_json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr);
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string reports_to_json(const std::vector<GradReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["parameter_name"] = r.parameter_name;
    j["max_rel_error"] = number_or_null(r.max_rel_error);
    j["max_abs_error"] = number_or_null(r.max_abs_error);
    j["num_elements_checked"] = r.num_elements_checked;
    j["tolerance"] = r.tolerance;
    j["passed"] = r.passed;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

std::vector<GradReport> reports_from_json(const std::string& text) {
  std::vector<GradReport> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      GradReport r;
      r.parameter_name = j.at("parameter_name").get<std::string>();
      r.max_rel_error = number_from(j.at("max_rel_error"));
      r.max_abs_error = number_from(j.at("max_abs_error"));
      r.num_elements_checked = j.at("num_elements_checked").get<std::size_t>();
      r.tolerance = j.at("tolerance").get<double>();
      r.passed = j.at("passed").get<bool>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed gradient report JSON: ") + e.what());
  }
  return out;
}

}  // namespace slide::gradcheck
