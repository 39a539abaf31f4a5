#include "neuroflap/train/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "neuroflap/train/trainer.hpp"

namespace neuroflap::train {

void Adam::step(std::span<ParamView> params) {
  for (const auto& p : params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter block '" + p.name + "'");
    }
  }
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value.size(), 0.0);
      v_[i].assign(params[i].value.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    auto value = params[i].value;
    auto grad = params[i].grad;
    if (m.size() != value.size()) throw std::logic_error("Adam: parameter block changed size");
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g;
      v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      value[k] -= opt_.learning_rate * m_hat / (std::sqrt(v_hat) + opt_.epsilon);
    }
  }
}

void Adam::restore(long long steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_gradients(std::span<ParamView> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.grad) g *= s;
    }
  }
  return norm;
}

}  // namespace neuroflap::train
