// SPDX-License-Identifier: Apache-2.0
#include "kdepth/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kdepth/tensor/tape.hpp"

namespace kdepth {

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

const GradcheckEntry& GradcheckReport::worst() const {
  if (entries.empty()) throw ShapeError("gradcheck report is empty");
  return *std::max_element(entries.begin(), entries.end(),
                           [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
}

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& e : entries) {
    os << "  " << e.name << ": max rel err " << std::scientific << e.max_rel_error << " at [" << e.worst_index
       << "] (analytic " << e.analytic << ", numeric " << e.numeric << ")\n";
  }
  return os.str();
}

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradScope no_grad;
  const double v = loss_fn().item();
  if (!std::isfinite(v)) throw DivergenceError("gradcheck: loss is not finite (" + std::to_string(v) + ")");
  return v;
}

}  // namespace

GradcheckReport gradcheck(const std::function<Tensor()>& loss_fn, const NamedTensors& params, double eps) {
  for (const auto& [name, p] : params) {
    if (p.dtype() != DType::f64) throw ParameterError("gradcheck: parameter " + name + " is not f64");
    if (!p.requires_grad()) throw ParameterError("gradcheck: parameter " + name + " does not require grad");
  }

  std::vector<Tensor> analytic;
  {
    for (const auto& np : params) {
      Tensor p = np.second;
      p.zero_grad();
    }
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = loss_fn();
    }
    if (!std::isfinite(loss.item())) throw DivergenceError("gradcheck: loss is not finite");
    tape.backward(loss);
    for (const auto& np : params) {
      const Tensor& p = np.second;
      analytic.push_back(p.has_grad() ? p.grad().clone() : Tensor::zeros(p.shape(), p.dtype()));
    }
  }

  GradcheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    GradcheckEntry entry;
    entry.name = params[k].first;
    auto values = p.data<double>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = evaluate(loss_fn);
      values[i] = original - eps;
      const double down = evaluate(loss_fn);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k].at(static_cast<std::int64_t>(i));
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > entry.max_rel_error || entry.worst_index < 0) {
        entry.max_rel_error = rel;
        entry.worst_index = static_cast<std::int64_t>(i);
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  for (const auto& np : params) {
    Tensor p = np.second;
    p.zero_grad();
  }
  return report;
}

}  // namespace kdepth
