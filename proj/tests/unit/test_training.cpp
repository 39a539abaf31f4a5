#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "neuroflap/error.hpp"
#include "neuroflap/train/adam.hpp"
#include "neuroflap/train/ann.hpp"
#include "neuroflap/train/dataset.hpp"
#include "neuroflap/train/loss.hpp"
#include "neuroflap/train/model.hpp"
#include "neuroflap/train/trainer.hpp"

using namespace neuroflap;
using namespace neuroflap::train;
using snn::LayerKind;

namespace {

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Two-pass reference: means first, then centered sums.
double reference_corr(const std::vector<double>& p, const std::vector<double>& t) {
  const double n = static_cast<double>(p.size());
  const double mp = std::accumulate(p.begin(), p.end(), 0.0) / n;
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cov += (p[i] - mp) * (t[i] - mt);
    vp += (p[i] - mp) * (p[i] - mp);
    vt += (t[i] - mt) * (t[i] - mt);
  }
  return cov / std::sqrt(vp * vt);
}

double reference_controller_loss(const SequenceBatch& pred, const SequenceBatch& target, double lambda) {
  double huber_sum = 0.0, corr_sum = 0.0;
  std::size_t n_huber = 0, n_corr = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    for (Eigen::Index o = 0; o < pred[b].rows(); ++o) {
      std::vector<double> p, t;
      for (Eigen::Index k = 0; k < pred[b].cols(); ++k) {
        const double e = std::abs(pred[b](o, k) - target[b](o, k));
        huber_sum += e <= 1.0 ? 0.5 * e * e : e - 0.5;
        ++n_huber;
        p.push_back(pred[b](o, k));
        t.push_back(target[b](o, k));
      }
      corr_sum += reference_corr(p, t);
      ++n_corr;
    }
  }
  return huber_sum / static_cast<double>(n_huber) + lambda * (1.0 - corr_sum / static_cast<double>(n_corr));
}

ScaledDataset toy_sine_dataset(std::size_t windows, std::size_t steps) {
  ScaledDataset ds;
  ds.c_x = {1.0, 1.0};
  ds.c_y = {1.0};
  for (std::size_t w = 0; w < windows; ++w) {
    Window win;
    win.input.resize(2, static_cast<Eigen::Index>(steps));
    win.target.resize(1, static_cast<Eigen::Index>(steps));
    const double phase = 0.7 * static_cast<double>(w);
    for (std::size_t k = 0; k < steps; ++k) {
      const double a = 2.0 * 3.14159265358979 * static_cast<double>(k) / 50.0 + phase;
      win.input(0, static_cast<Eigen::Index>(k)) = std::sin(a);
      win.input(1, static_cast<Eigen::Index>(k)) = std::cos(a);
      win.target(0, static_cast<Eigen::Index>(k)) = std::sin(a - 0.3);
    }
    win.log = w;
    ds.windows.push_back(std::move(win));
  }
  return ds;
}

SnnParams toy_controller(std::uint64_t seed) {
  SnnInit init;
  init.input_gain = 2.0;
  init.theta = 0.5;
  const std::size_t hidden[] = {10};
  const LayerKind kinds[] = {LayerKind::recurrent};
  return init_snn(2, hidden, kinds, 1, init, seed);
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.window_len = 200;
  cfg.stride = 200;
  cfg.burn_in = 20;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 60;
  cfg.batch_size = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_SUITE("equations") {
  TEST_CASE("huber branches") {
    CHECK(huber(0.5, 1.0) == 0.125);
    CHECK(huber(2.0, 1.0) == 1.5);
    CHECK(huber(1.0, 1.0) == 0.5);
    CHECK(huber(-1.0, 1.0) == 0.5);
    const double d = 1.0, eps = 1e-12;
    CHECK(huber(d + eps, d) == doctest::Approx(0.5 * d * d).epsilon(1e-10));
    CHECK(huber(-(d + eps), d) == doctest::Approx(0.5 * d * d).epsilon(1e-10));
  }

  TEST_CASE("pearson identities") {
    Eigen::RowVectorXd t(6);
    t << 0.1, -2.0, 3.5, 0.7, 1.1, -0.4;
    CHECK(pearson_channel(t, t) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pearson_channel(-t, t) == doctest::Approx(-1.0).epsilon(1e-14));
    Eigen::RowVectorXd affine = (2.5 * t.array() + 4.0).matrix();
    CHECK(pearson_channel(affine, t) == doctest::Approx(1.0).epsilon(1e-14));
    Eigen::RowVectorXd flat = Eigen::RowVectorXd::Constant(6, 3.0);
    CHECK(pearson_channel(flat, t) == 0.0);
  }

  TEST_CASE("estimator loss examples") {
    TrainConfig cfg;
    cfg.burn_in = 100;
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(3, 300);
    CHECK(loss_estimator({target}, {target}, cfg) == 0.0);
    Eigen::MatrixXd early = target;
    early.leftCols(100).array() += 7.0;
    CHECK(loss_estimator({early}, {target}, cfg) == 0.0);
    Eigen::MatrixXd uniform = target;
    uniform.rightCols(200).array() += 0.5;
    CHECK(loss_estimator({uniform}, {target}, cfg) == doctest::Approx(0.125).epsilon(1e-14));
    CHECK_THROWS_AS(loss_estimator({target.leftCols(100)}, {target.leftCols(100)}, cfg), ContractViolation);
  }

  TEST_CASE("controller loss examples") {
    TrainConfig cfg;
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(2, 150);
    CHECK(loss_controller({target}, {target}, cfg) == doctest::Approx(0.0).scale(1.0));
    Eigen::MatrixXd offset = (target.array() + 0.5).matrix();
    CHECK(loss_controller({offset}, {target}, cfg) == doctest::Approx(0.125).epsilon(1e-12));
  }

  TEST_CASE("surrogate values") {
    CHECK(surrogate_grad(0.7, 0.7, 2.0) == 1.0);
    CHECK(surrogate_grad(2.0, 1.0, 1.0) == 0.5);
    for (double a : {0.1, 0.5, 3.0}) CHECK(surrogate_grad(1.0 + a, 1.0, 2.0) == surrogate_grad(1.0 - a, 1.0, 2.0));
  }

  TEST_CASE("adam leaves zero-gradient parameters untouched") {
    std::vector<double> value{1.0, -2.0, 0.5}, grad(3, 0.0);
    std::vector<ParamView> views{{"w", value, grad}};
    Adam adam;
    for (int i = 0; i < 10; ++i) adam.step(views);
    CHECK(value == std::vector<double>{1.0, -2.0, 0.5});
  }

  TEST_CASE("adam descends along a constant positive gradient") {
    std::vector<double> value{0.0}, grad{1.0};
    std::vector<ParamView> views{{"w", value, grad}};
    Adam adam;
    double prev = value[0];
    for (int i = 0; i < 50; ++i) {
      adam.step(views);
      CHECK(value[0] < prev);
      prev = value[0];
    }
  }

  TEST_CASE("adam rejects non-finite gradients") {
    std::vector<double> value{0.0}, grad{std::numeric_limits<double>::quiet_NaN()};
    std::vector<ParamView> views{{"w", value, grad}};
    Adam adam;
    CHECK_THROWS_AS(adam.step(views), TrainingError);
  }

  TEST_CASE("scaling examples") {
    const std::vector<double> ones{1.0, 1.0};
    Eigen::VectorXd x(2);
    x << 2.0, 4.0;
    CHECK(scale(x, ones) == x);
    const std::vector<double> c{0.5, 0.25};
    CHECK(scale(x, c) == Eigen::VectorXd::Ones(2));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-100.0, 100.0), s(0.01, 10.0);
    for (int rep = 0; rep < 1000; ++rep) {
      Eigen::VectorXd v(3);
      std::vector<double> cs(3);
      for (int i = 0; i < 3; ++i) {
        v(i) = u(rng);
        cs[static_cast<std::size_t>(i)] = s(rng);
      }
      const Eigen::VectorXd back = unscale(scale(v, cs), cs);
      for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(back(i) - v(i)) <= std::abs(std::nextafter(v(i), 2.0 * v(i)) - v(i)));
      }
    }
    const std::vector<double> zero{1.0, 0.0};
    CHECK_THROWS_AS(scale(x, zero), ContractViolation);
  }

  TEST_CASE("window counts") {
    CHECK(window_starts(2500, 2500, 400) == std::vector<std::size_t>{0});
    CHECK(window_starts(3300, 2500, 400) == std::vector<std::size_t>{0, 400, 800});
    CHECK(window_starts(2499, 2500, 400).empty());
  }

  TEST_CASE("windows never span two logs") {
    TrainConfig cfg;
    cfg.window_len = 100;
    cfg.stride = 30;
    cfg.burn_in = 10;
    std::vector<LogFeatures> logs(3);
    const Eigen::Index lengths[] = {250, 90, 160};
    for (std::size_t l = 0; l < 3; ++l) {
      logs[l].inputs = Eigen::MatrixXd::Constant(2, lengths[l], static_cast<double>(l));
      logs[l].targets = Eigen::MatrixXd::Constant(1, lengths[l], static_cast<double>(l));
    }
    const std::vector<double> cx{1.0, 1.0}, cy{1.0};
    std::vector<std::string> warnings;
    const auto ds = window_dataset(logs, cx, cy, cfg, Split::train, &warnings);
    CHECK(warnings.size() == 1);
    CHECK(ds.windows.size() == window_starts(250, 100, 30).size() + window_starts(160, 100, 30).size());
    for (const auto& w : ds.windows) {
      CHECK(w.input.cols() == 100);
      CHECK((w.input.array() == static_cast<double>(w.log)).all());
      CHECK(w.start + 100 <= static_cast<std::size_t>(lengths[w.log]));
    }
  }

  TEST_CASE("quiescent single neuron has zero loss") {
    SnnInit init;
    const std::size_t hidden[] = {1};
    const LayerKind kinds[] = {LayerKind::recurrent};
    auto p = init_snn(2, hidden, kinds, 1, init, 3);
    TrainConfig cfg;
    cfg.window_len = 150;
    cfg.burn_in = 20;
    SnnModel model(p, cfg.surrogate_slope);
    const auto y = model.forward(Eigen::MatrixXd::Zero(2, 150));
    CHECK(window_loss(LossKind::estimator, y, Eigen::MatrixXd::Zero(1, 150), 1, cfg).value == 0.0);
  }

  TEST_CASE("rectifier network with zero weights outputs zeros") {
    const std::size_t hidden[] = {4, 3};
    const LayerKind kinds[] = {LayerKind::feedforward, LayerKind::recurrent};
    auto p = init_ann(3, hidden, kinds, 2, AnnInit{}, 1);
    for (auto& l : p.layers) {
      l.w_in.setZero();
      l.w_rec.setZero();
    }
    p.w_out.setZero();
    std::mt19937_64 rng(1);
    CHECK(ann_forward(p, gaussian(rng, 3, 40)).isZero(0.0));
  }

  TEST_CASE("negative pre-activations give a zero hidden state") {
    const std::size_t hidden[] = {5};
    const LayerKind kinds[] = {LayerKind::recurrent};
    auto p = init_ann(2, hidden, kinds, 1, AnnInit{}, 2);
    p.layers[0].w_in = -p.layers[0].w_in.cwiseAbs();
    AnnTape tape;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 30);
    const auto y = ann_forward(p, x, &tape);
    CHECK(tape.hidden[0].isZero(0.0));
    CHECK(y.isZero(0.0));
  }
}

TEST_SUITE("training") {
  TEST_CASE("controller loss matches a two-pass reference") {
    std::mt19937_64 rng(11);
    TrainConfig cfg;
    for (int rep = 0; rep < 20; ++rep) {
      SequenceBatch pred, target;
      for (int b = 0; b < 3; ++b) {
        pred.push_back(gaussian(rng, 2, 120, 1.5));
        target.push_back(gaussian(rng, 2, 120, 1.5));
      }
      const double want = reference_controller_loss(pred, target, cfg.corr_weight);
      CHECK(std::abs(loss_controller(pred, target, cfg) - want) <= 1e-10 * std::abs(want));
    }
  }

  TEST_CASE("pearson averages over batch and channels") {
    std::mt19937_64 rng(12);
    SequenceBatch pred{gaussian(rng, 3, 50), gaussian(rng, 3, 50)};
    SequenceBatch target{gaussian(rng, 3, 50), gaussian(rng, 3, 50)};
    double sum = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      for (Eigen::Index o = 0; o < 3; ++o) {
        std::vector<double> pv, tv;
        for (Eigen::Index k = 0; k < 50; ++k) {
          pv.push_back(pred[b](o, k));
          tv.push_back(target[b](o, k));
        }
        sum += reference_corr(pv, tv);
      }
    }
    CHECK(pearson(pred, target) == doctest::Approx(sum / 6.0).epsilon(1e-12));
  }

  TEST_CASE("adam converges on a quadratic") {
    // f(x) = sum_i a_i (x_i - m_i)^2
    const std::vector<double> a{1.0, 3.0, 0.5}, m{2.0, -1.0, 0.25};
    std::vector<double> x{0.0, 0.0, 0.0}, g(3);
    std::vector<ParamView> views{{"x", x, g}};
    Adam adam(Adam::Options{0.05, 0.9, 0.999, 1e-8});
    int steps = 0;
    auto done = [&] {
      for (std::size_t i = 0; i < 3; ++i) {
        if (std::abs(x[i] - m[i]) > 1e-6) return false;
      }
      return true;
    };
    while (!done() && steps < 2000) {
      for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * a[i] * (x[i] - m[i]);
      adam.step(views);
      ++steps;
    }
    CHECK(done());
    MESSAGE("converged in " << steps << " steps");
  }

  TEST_CASE("global-norm clipping") {
    std::vector<double> v1{0.0, 0.0}, g1{3.0, 0.0}, v2{0.0}, g2{4.0};
    std::vector<ParamView> views{{"a", v1, g1}, {"b", v2, g2}};
    CHECK(clip_gradients(views, 1.0) == 5.0);
    CHECK(g1[0] == doctest::Approx(0.6));
    CHECK(g2[0] == doctest::Approx(0.8));
    CHECK(clip_gradients(views, 10.0) == doctest::Approx(1.0));
    CHECK(g2[0] == doctest::Approx(0.8));
  }

  TEST_CASE("leak factors are clamped after an update") {
    auto p = toy_controller(4);
    SnnModel model(p, 2.0);
    model.params().layers[0].alpha(0) = 1.5;
    model.params().layers[0].beta(1) = -0.2;
    model.project();
    CHECK(model.params().layers[0].alpha(0) == kLeakMax);
    CHECK(model.params().layers[0].beta(1) == kLeakMin);
  }

  TEST_CASE("channel scales are inverse RMS") {
    Eigen::MatrixXd a(2, 4), b(2, 2);
    a << 1, -1, 1, -1, 0, 0, 0, 0;
    b << 1, 1, 0, 0;
    const std::vector<Eigen::MatrixXd> sig{a, b};
    const auto c = compute_scales(sig);
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == 1.0);
  }

  TEST_CASE("held-out logs come from the end") {
    const auto s = split_logs(10);
    CHECK(s.validation == std::vector<std::size_t>{8, 9});
    CHECK(s.train.size() == 8);
    CHECK(split_logs(1).validation.empty());
  }

  TEST_CASE("toy sine imitation reduces the loss below ten percent") {
    const auto ds = toy_sine_dataset(4, 200);
    const auto cfg = toy_config();
    SnnModel model(toy_controller(9), cfg.surrogate_slope);
    const auto h = train::train(model, ds, nullptr, LossKind::controller, cfg);
    REQUIRE_FALSE(h.diverged);
    REQUIRE(h.epochs.size() == cfg.epochs);
    MESSAGE("initial " << h.initial_loss << " final " << h.epochs.back().train_loss);
    CHECK(h.epochs.back().train_loss < 0.1 * h.initial_loss);
  }

  TEST_CASE("same seed gives identical histories") {
    const auto ds = toy_sine_dataset(4, 200);
    auto cfg = toy_config();
    cfg.epochs = 5;
    SnnModel a(toy_controller(9), cfg.surrogate_slope), b(toy_controller(9), cfg.surrogate_slope);
    const auto ha = train::train(a, ds, &ds, LossKind::controller, cfg);
    const auto hb = train::train(b, ds, &ds, LossKind::controller, cfg);
    REQUIRE(ha.epochs.size() == hb.epochs.size());
    CHECK(ha.initial_loss == hb.initial_loss);
    for (std::size_t e = 0; e < ha.epochs.size(); ++e) {
      CHECK(ha.epochs[e].train_loss == hb.epochs[e].train_loss);
      CHECK(ha.epochs[e].val_loss == hb.epochs[e].val_loss);
      CHECK(ha.epochs[e].rho == hb.epochs[e].rho);
    }
    CHECK(a.params().w_out == b.params().w_out);
  }

  TEST_CASE("resuming from a checkpoint continues the same trajectory") {
    const auto ds = toy_sine_dataset(4, 200);
    auto cfg = toy_config();
    cfg.epochs = 6;
    SnnModel full(toy_controller(9), cfg.surrogate_slope);
    Adam opt_full(Adam::Options{cfg.learning_rate});
    const auto h_full = train::train(full, ds, nullptr, LossKind::controller, cfg, opt_full);

    cfg.epochs = 3;
    SnnModel part(toy_controller(9), cfg.surrogate_slope);
    Adam opt_part(Adam::Options{cfg.learning_rate});
    train::train(part, ds, nullptr, LossKind::controller, cfg, opt_part);
    std::stringstream buf;
    save_optimizer_state(snapshot(opt_part, 3), buf);
    const auto ckpt = load_optimizer_state(buf);
    CHECK(ckpt.epoch == 3);
    Adam resumed(Adam::Options{cfg.learning_rate});
    restore(resumed, ckpt);
    cfg.epochs = 6;
    const auto h_rest = train::train(part, ds, nullptr, LossKind::controller, cfg, resumed, {}, 3);
    REQUIRE(h_rest.epochs.size() == 3);
    CHECK(h_rest.epochs.back().train_loss == h_full.epochs.back().train_loss);
    CHECK(part.params().w_out == full.params().w_out);
  }

  TEST_CASE("history csv has one row per epoch plus the initial loss") {
    TrainHistory h;
    h.initial_loss = 2.0;
    h.epochs.push_back({1, 1.0, 1.5, 0.3});
    std::stringstream out;
    write_history_csv(h, out);
    std::string line;
    int rows = 0;
    while (std::getline(out, line)) ++rows;
    CHECK(rows == 3);
  }

  TEST_CASE("rectifier network matches a step-by-step loop") {
    std::mt19937_64 rng(13);
    const std::size_t hidden[] = {6, 5};
    const LayerKind kinds[] = {LayerKind::feedforward, LayerKind::recurrent};
    const auto p = init_ann(4, hidden, kinds, 3, AnnInit{1.0, 0.8, 1.0}, 21);
    const auto x = gaussian(rng, 4, 60);
    const auto y = ann_forward(p, x);
    std::vector<std::vector<double>> h{std::vector<double>(6, 0.0), std::vector<double>(5, 0.0)};
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      std::vector<double> below(x.col(t).data(), x.col(t).data() + x.rows());
      for (std::size_t l = 0; l < 2; ++l) {
        const auto& L = p.layers[l];
        std::vector<double> next(h[l].size());
        for (std::size_t i = 0; i < next.size(); ++i) {
          double a = 0.0;
          for (std::size_t j = 0; j < below.size(); ++j) a += L.w_in(i, j) * below[j];
          if (L.kind == LayerKind::recurrent) {
            for (std::size_t j = 0; j < h[l].size(); ++j) a += L.w_rec(i, j) * h[l][j];
          }
          next[i] = a > 0.0 ? a : 0.0;
        }
        h[l] = next;
        below = next;
      }
      for (Eigen::Index o = 0; o < 3; ++o) {
        double a = 0.0;
        for (std::size_t j = 0; j < below.size(); ++j) a += p.w_out(o, j) * below[j];
        CHECK(std::abs(y(o, t) - a) <= 1e-6 * std::max(1.0, std::abs(a)));
      }
    }
  }

  TEST_CASE("rectifier network round-trips through its file format") {
    const std::size_t ehid[] = {4, 4};
    const LayerKind ekinds[] = {LayerKind::feedforward, LayerKind::recurrent};
    const std::size_t chid[] = {3};
    const LayerKind ckinds[] = {LayerKind::recurrent};
    AnnNetwork net;
    net.estimator.params = init_ann(6, ehid, ekinds, 3, AnnInit{}, 1);
    net.estimator.input_scale.assign(6, 0.5);
    net.estimator.output_scale.assign(3, 0.1);
    net.controller.params = init_ann(7, chid, ckinds, 1, AnnInit{}, 2);
    net.controller.input_scale.assign(7, 2.0);
    net.controller.output_scale.assign(1, 0.25);
    std::stringstream buf;
    save_ann(net, buf);
    const auto back = load_ann(buf);
    CHECK(back.estimator.params.layers[1].w_rec == net.estimator.params.layers[1].w_rec);
    CHECK(back.controller.params.w_out == net.controller.params.w_out);
    CHECK(back.controller.output_scale == net.controller.output_scale);
    CHECK(back.variant == net.variant);
  }
}
