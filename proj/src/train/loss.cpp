#include "neuroflap/train/loss.hpp"

#include <cmath>

#include "neuroflap/error.hpp"

namespace neuroflap::train {

void TrainConfig::validate() const {
  require(window_len > 0, "window length must be positive");
  require(burn_in < window_len, "burn-in must be shorter than the window");
  require(stride > 0 && stride <= window_len, "stride must be in (0, window length]");
  require(huber_delta > 0.0, "Huber delta must be positive");
  require(corr_weight >= 0.0, "correlation weight must be non-negative");
  require(surrogate_slope > 0.0, "surrogate slope must be positive");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(batch_size > 0, "batch size must be positive");
}

double huber(double error, double delta) {
  const double a = std::abs(error);
  return a <= delta ? 0.5 * error * error : delta * a - 0.5 * delta * delta;
}

double huber_derivative(double error, double delta) {
  if (std::abs(error) <= delta) return error;
  return error > 0.0 ? delta : -delta;
}

double surrogate_grad(double v, double theta, double kappa) {
  const double d = v - theta;
  return 1.0 / (1.0 + kappa * d * d);
}

namespace {

struct Moments {
  double rho = 0.0;
  double spp = 0.0;
  double stt = 0.0;
  double spt = 0.0;
  double mean_p = 0.0;
  double mean_t = 0.0;
};

Moments channel_moments(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& t) {
  Moments m;
  const auto n = static_cast<double>(p.size());
  m.mean_p = p.sum() / n;
  m.mean_t = t.sum() / n;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double dp = p[k] - m.mean_p;
    const double dt = t[k] - m.mean_t;
    m.spp += dp * dp;
    m.stt += dt * dt;
    m.spt += dp * dt;
  }
  if (m.spp > 0.0 && m.stt > 0.0) m.rho = m.spt / std::sqrt(m.spp * m.stt);
  return m;
}

void check_shapes(const SequenceBatch& pred, const SequenceBatch& target) {
  require(pred.size() == target.size() && !pred.empty(), "loss: batch sizes differ or are empty");
  for (std::size_t b = 0; b < pred.size(); ++b) {
    require(pred[b].rows() == target[b].rows() && pred[b].cols() == target[b].cols(), "loss: sequence shapes differ");
  }
}

}  // namespace

double pearson_channel(const Eigen::Ref<const Eigen::RowVectorXd>& pred,
                       const Eigen::Ref<const Eigen::RowVectorXd>& target) {
  require(pred.size() == target.size() && pred.size() >= 2, "pearson: need at least two aligned samples");
  return channel_moments(pred, target).rho;
}

double pearson(const SequenceBatch& pred, const SequenceBatch& target) {
  check_shapes(pred, target);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    for (Eigen::Index o = 0; o < pred[b].rows(); ++o) {
      sum += pearson_channel(pred[b].row(o), target[b].row(o));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

WindowLoss window_loss(LossKind kind, const Sequence& pred, const Sequence& target, std::size_t batch_size,
                       const TrainConfig& cfg) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "loss: sequence shapes differ");
  const Eigen::Index steps = pred.cols();
  const Eigen::Index outputs = pred.rows();
  const Eigen::Index first = kind == LossKind::estimator ? static_cast<Eigen::Index>(cfg.burn_in) : 0;
  require(steps > first, "loss: sequence not longer than burn-in");

  WindowLoss out;
  out.grad = Sequence::Zero(outputs, steps);
  const double huber_norm =
      1.0 / (static_cast<double>(steps - first) * static_cast<double>(outputs) * static_cast<double>(batch_size));
  double huber_sum = 0.0;
  for (Eigen::Index t = first; t < steps; ++t) {
    for (Eigen::Index o = 0; o < outputs; ++o) {
      const double e = pred(o, t) - target(o, t);
      huber_sum += huber(e, cfg.huber_delta);
      out.grad(o, t) = huber_derivative(e, cfg.huber_delta) * huber_norm;
    }
  }
  out.huber_mean = huber_sum / static_cast<double>((steps - first) * outputs);
  out.value = huber_sum * huber_norm;

  if (kind == LossKind::controller) {
    require(steps >= 2, "pearson: need at least two samples");
    const double corr_norm = cfg.corr_weight / (static_cast<double>(outputs) * static_cast<double>(batch_size));
    double corr_sum = 0.0;
    for (Eigen::Index o = 0; o < outputs; ++o) {
      const auto m = channel_moments(pred.row(o), target.row(o));
      corr_sum += m.rho;
      if (m.spp > 0.0 && m.stt > 0.0) {
        // d rho / d p_t = (dt_t - (spt / spp) dp_t) / sqrt(spp stt)
        const double denom = std::sqrt(m.spp * m.stt);
        const double ratio = m.spt / m.spp;
        for (Eigen::Index t = 0; t < steps; ++t) {
          const double dp = pred(o, t) - m.mean_p;
          const double dt = target(o, t) - m.mean_t;
          out.grad(o, t) -= corr_norm * (dt - ratio * dp) / denom;
        }
      }
    }
    out.mean_corr = corr_sum / static_cast<double>(outputs);
    out.value += cfg.corr_weight / static_cast<double>(batch_size) - corr_norm * corr_sum;
  }
  return out;
}

double loss_estimator(const SequenceBatch& pred, const SequenceBatch& target, const TrainConfig& cfg) {
  check_shapes(pred, target);
  double total = 0.0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    total += window_loss(LossKind::estimator, pred[b], target[b], pred.size(), cfg).value;
  }
  return total;
}

double loss_controller(const SequenceBatch& pred, const SequenceBatch& target, const TrainConfig& cfg) {
  check_shapes(pred, target);
  double total = 0.0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    total += window_loss(LossKind::controller, pred[b], target[b], pred.size(), cfg).value;
  }
  return total;
}

}  // namespace neuroflap::train
