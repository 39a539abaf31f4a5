#include "neuroflap/train/model.hpp"

#include <algorithm>
#include <cmath>

#include "neuroflap/error.hpp"

namespace neuroflap::train {

namespace {

std::span<double> as_span(Eigen::MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> as_span(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::MatrixXd to_eigen(const snn::Matrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
  }
  return out;
}

snn::Matrix to_matrix(const Eigen::MatrixXd& m) {
  snn::Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = static_cast<float>(m(r, c));
    }
  }
  return out;
}

Eigen::VectorXd to_eigen(const std::vector<float>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

std::vector<float> to_floats(const Eigen::VectorXd& v) {
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

SnnParams SnnParams::zeros_like() const {
  SnnParams z = *this;
  z.set_zero();
  return z;
}

void SnnParams::set_zero() {
  for (auto& l : layers) {
    l.w_in.setZero();
    l.w_rec.setZero();
    l.alpha.setZero();
    l.beta.setZero();
    l.theta.setZero();
  }
  w_out.setZero();
}

std::vector<ParamView> SnnParams::views(SnnParams& grads) {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    auto& g = grads.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.push_back({prefix + "w_in", as_span(p.w_in), as_span(g.w_in)});
    if (p.kind == snn::LayerKind::recurrent) out.push_back({prefix + "w_rec", as_span(p.w_rec), as_span(g.w_rec)});
    out.push_back({prefix + "alpha", as_span(p.alpha), as_span(g.alpha)});
    out.push_back({prefix + "beta", as_span(p.beta), as_span(g.beta)});
    out.push_back({prefix + "theta", as_span(p.theta), as_span(g.theta)});
  }
  out.push_back({"w_out", as_span(w_out), as_span(grads.w_out)});
  return out;
}

SnnParams init_snn(std::size_t inputs, std::span<const std::size_t> hidden, std::span<const snn::LayerKind> kinds,
                   std::size_t outputs, const SnnInit& init, std::uint64_t seed) {
  require(hidden.size() == kinds.size() && !hidden.empty(), "init_snn: layer sizes and kinds must align");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c, double stddev) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = stddev * normal(rng);
    }
    return m;
  };
  auto uniform = [&](Eigen::Index n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
  };

  SnnParams p;
  std::size_t d = inputs;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    SnnLayerParams layer;
    layer.kind = kinds[l];
    const auto n = static_cast<Eigen::Index>(hidden[l]);
    const double gain = l == 0 ? init.input_gain : init.spike_gain;
    layer.w_in = gaussian(n, static_cast<Eigen::Index>(d), gain / std::sqrt(static_cast<double>(d)));
    if (layer.kind == snn::LayerKind::recurrent) {
      layer.w_rec = gaussian(n, n, init.rec_gain / std::sqrt(static_cast<double>(n)));
    }
    layer.alpha = uniform(n, init.alpha_lo, init.alpha_hi);
    layer.beta = uniform(n, init.beta_lo, init.beta_hi);
    layer.theta = Eigen::VectorXd::Constant(n, init.theta);
    p.layers.push_back(std::move(layer));
    d = hidden[l];
  }
  p.w_out = gaussian(static_cast<Eigen::Index>(outputs), static_cast<Eigen::Index>(d),
                     init.out_gain / std::sqrt(static_cast<double>(d)));
  return p;
}

SnnParams snn_params_from(const snn::SubNetwork& net) {
  SnnParams p;
  for (const auto& layer : net.layers) {
    SnnLayerParams l;
    l.kind = layer.kind;
    l.w_in = to_eigen(layer.w_in);
    if (layer.kind == snn::LayerKind::recurrent) l.w_rec = to_eigen(layer.w_rec);
    l.alpha = to_eigen(layer.params.alpha);
    l.beta = to_eigen(layer.params.beta);
    l.theta = to_eigen(layer.params.theta);
    p.layers.push_back(std::move(l));
  }
  p.w_out = to_eigen(net.readout.w_out);
  return p;
}

void write_snn_params(const SnnParams& params, snn::SubNetwork& net) {
  net.layers.clear();
  for (const auto& l : params.layers) {
    snn::SpikingLayer layer;
    layer.kind = l.kind;
    layer.w_in = to_matrix(l.w_in);
    if (l.kind == snn::LayerKind::recurrent) layer.w_rec = to_matrix(l.w_rec);
    layer.params.alpha = to_floats(l.alpha);
    layer.params.beta = to_floats(l.beta);
    layer.params.theta = to_floats(l.theta);
    // Narrowing can round a leak onto the open interval's boundary.
    for (auto* leak : {&layer.params.alpha, &layer.params.beta}) {
      for (float& a : *leak) a = std::clamp(a, 1e-4f, std::nextafter(1.0f, 0.0f));
    }
    layer.state = snn::LayerState(layer.size());
    net.layers.push_back(std::move(layer));
  }
  net.readout.w_out = to_matrix(params.w_out);
  net.prepare();
}

SnnModel::SnnModel(SnnParams params, double kappa)
    : params_(std::move(params)), grads_(params_.zeros_like()), kappa_(kappa) {}

Sequence SnnModel::forward(const Eigen::MatrixXd& inputs) { return snn_forward(params_, inputs, &tape_); }

void SnnModel::backward(const Sequence& grad_out) { snn_backward(params_, tape_, grad_out, kappa_, grads_); }

void SnnModel::project() {
  for (auto& l : params_.layers) {
    l.alpha = l.alpha.cwiseMax(kLeakMin).cwiseMin(kLeakMax);
    l.beta = l.beta.cwiseMax(kLeakMin).cwiseMin(kLeakMax);
  }
}

std::unique_ptr<Model> SnnModel::clone() const { return std::make_unique<SnnModel>(params_, kappa_); }

double SnnModel::mean_spike_rate() const {
  double total = 0.0;
  double count = 0.0;
  for (const auto& s : tape_.spikes) {
    total += s.rightCols(s.cols() - 1).sum();
    count += static_cast<double>(s.rows() * (s.cols() - 1));
  }
  return count > 0.0 ? total / count : 0.0;
}

}  // namespace neuroflap::train
