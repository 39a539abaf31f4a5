#include <Eigen/Core>
#include <vector>

#include "neuroflap/error.hpp"
#include "neuroflap/train/model.hpp"

namespace neuroflap::train {

namespace {

void active_indices(const Eigen::Ref<const Eigen::VectorXd>& spikes, std::vector<Eigen::Index>& out) {
  out.clear();
  for (Eigen::Index j = 0; j < spikes.size(); ++j) {
    if (spikes[j] != 0.0) out.push_back(j);
  }
}

}  // namespace

Sequence snn_forward(const SnnParams& params, const Eigen::MatrixXd& inputs, SnnTape* tape) {
  require(!params.layers.empty(), "snn_forward: network has no layers");
  require(static_cast<std::size_t>(inputs.rows()) == params.input_size(), "snn_forward: input width mismatch");
  const Eigen::Index steps = inputs.cols();
  const std::size_t n_layers = params.layers.size();

  SnnTape local;
  SnnTape& t = tape ? *tape : local;
  t.inputs = inputs;
  t.current.resize(n_layers);
  t.membrane.resize(n_layers);
  t.spikes.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::Index n = params.layers[l].w_in.rows();
    t.current[l].setZero(n, steps + 1);
    t.membrane[l].setZero(n, steps + 1);
    t.spikes[l].setZero(n, steps + 1);
  }

  Sequence out(static_cast<Eigen::Index>(params.output_size()), steps);
  std::vector<Eigen::Index> active;
  Eigen::VectorXd cur;
  for (Eigen::Index k = 1; k <= steps; ++k) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto& p = params.layers[l];
      auto& I = t.current[l];
      auto& V = t.membrane[l];
      auto& S = t.spikes[l];

      cur = p.alpha.cwiseProduct(I.col(k - 1));
      if (l == 0) {
        cur.noalias() += p.w_in * inputs.col(k - 1);
      } else {
        active_indices(t.spikes[l - 1].col(k), active);
        for (auto j : active) cur += p.w_in.col(j);
      }
      if (p.kind == snn::LayerKind::recurrent) {
        active_indices(S.col(k - 1), active);
        for (auto j : active) cur += p.w_rec.col(j);
      }
      I.col(k) = cur;
      V.col(k) = p.beta.cwiseProduct(V.col(k - 1)).cwiseProduct((1.0 - S.col(k - 1).array()).matrix()) + I.col(k - 1);
      S.col(k) = ((V.col(k) - p.theta).array() >= 0.0).cast<double>().matrix();
    }
    active_indices(t.spikes.back().col(k), active);
    auto y = out.col(k - 1);
    y.setZero();
    for (auto j : active) y += params.w_out.col(j);
  }
  if (!tape) t = SnnTape{};
  return out;
}

void snn_backward(const SnnParams& params, const SnnTape& tape, const Sequence& grad_out, double kappa,
                  SnnParams& grads) {
  require(!tape.empty() && tape.current.size() == params.layers.size(), "snn_backward: no recorded forward pass");
  const Eigen::Index steps = static_cast<Eigen::Index>(tape.steps());
  require(grad_out.cols() == steps && static_cast<std::size_t>(grad_out.rows()) == params.output_size(),
          "snn_backward: output gradient shape mismatch");
  require(grads.layers.size() == params.layers.size(), "snn_backward: gradient buffer shape mismatch");

  const std::size_t n_layers = params.layers.size();
  std::vector<Eigen::Index> active;

  // Gradient arriving at each layer's spikes from above (readout or next layer).
  Eigen::MatrixXd external(params.layers.back().w_in.rows(), steps + 1);
  external.setZero();
  {
    const auto& S = tape.spikes.back();
    for (Eigen::Index k = 1; k <= steps; ++k) {
      external.col(k).noalias() = params.w_out.transpose() * grad_out.col(k - 1);
      active_indices(S.col(k), active);
      for (auto j : active) grads.w_out.col(j) += grad_out.col(k - 1);
    }
  }

  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& p = params.layers[li];
    auto& g = grads.layers[li];
    const auto& I = tape.current[li];
    const auto& V = tape.membrane[li];
    const auto& S = tape.spikes[li];
    const Eigen::Index n = p.w_in.rows();
    const bool recurrent = p.kind == snn::LayerKind::recurrent;

    Eigen::MatrixXd lower;
    if (li > 0) lower.setZero(params.layers[li - 1].w_in.rows(), steps + 1);

    Eigen::VectorXd gI_next = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd gV_next = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd gS(n), gV(n), gI(n), sigma(n);
    for (Eigen::Index k = steps; k >= 1; --k) {
      gS = external.col(k);
      if (recurrent) gS.noalias() += p.w_rec.transpose() * gI_next;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = V(i, k) - p.theta[i];
        sigma[i] = 1.0 / (1.0 + kappa * d * d);
      }
      gV = sigma.cwiseProduct(gS) + p.beta.cwiseProduct(gV_next).cwiseProduct((1.0 - S.col(k).array()).matrix());
      gI = gV_next + p.alpha.cwiseProduct(gI_next);

      g.theta -= sigma.cwiseProduct(gS);
      g.alpha += gI.cwiseProduct(I.col(k - 1));
      g.beta += gV.cwiseProduct(V.col(k - 1)).cwiseProduct((1.0 - S.col(k - 1).array()).matrix());
      if (li == 0) {
        g.w_in.noalias() += gI * tape.inputs.col(k - 1).transpose();
      } else {
        active_indices(tape.spikes[li - 1].col(k), active);
        for (auto j : active) g.w_in.col(j) += gI;
        lower.col(k).noalias() = p.w_in.transpose() * gI;
      }
      if (recurrent) {
        active_indices(S.col(k - 1), active);
        for (auto j : active) g.w_rec.col(j) += gI;
      }
      gI_next = gI;
      gV_next = gV;
    }
    if (li > 0) external = std::move(lower);
  }
}

}  // namespace neuroflap::train
