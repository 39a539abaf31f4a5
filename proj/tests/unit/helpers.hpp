#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "neuroflap/snn/network.hpp"

namespace nftest {

using neuroflap::snn::Matrix;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = d(rng);
  return m;
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t n, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<std::uint8_t> random_spikes(std::mt19937_64& rng, std::size_t n, double rate) {
  std::bernoulli_distribution d(rate);
  std::vector<std::uint8_t> s(n);
  for (auto& x : s) x = d(rng) ? 1 : 0;
  return s;
}

/// Random weights and neuron parameters on a network of the given shape.
inline void randomize(neuroflap::snn::SubNetwork& net, std::mt19937_64& rng, float gain = 1.0f) {
  std::uniform_real_distribution<float> leak(0.5f, 0.95f);
  std::uniform_real_distribution<float> thr(0.5f, 1.5f);
  for (auto& l : net.layers) {
    l.w_in = random_matrix(rng, l.w_in.rows, l.w_in.cols, gain / std::sqrt(static_cast<float>(l.w_in.cols)));
    if (!l.w_rec.empty()) l.w_rec = random_matrix(rng, l.w_rec.rows, l.w_rec.cols, 0.5f * gain / std::sqrt(static_cast<float>(l.w_rec.cols)));
    for (auto& a : l.params.alpha) a = leak(rng);
    for (auto& b : l.params.beta) b = leak(rng);
    for (auto& t : l.params.theta) t = thr(rng);
  }
  net.readout.w_out = random_matrix(rng, net.readout.w_out.rows, net.readout.w_out.cols, 0.3f);
  net.prepare();
}

inline neuroflap::snn::NetworkSpec random_network(std::mt19937_64& rng, const neuroflap::snn::NetworkShape& shape,
                                                  float gain = 1.0f) {
  auto spec = neuroflap::snn::make_network(shape);
  randomize(spec.estimator, rng, gain);
  randomize(spec.controller, rng, gain);
  spec.prepare();
  return spec;
}

inline neuroflap::snn::NetworkShape small_shape(std::size_t ff = 8, std::size_t rec = 8, std::size_t ctl = 6) {
  neuroflap::snn::NetworkShape s;
  s.estimator_ff = ff;
  s.estimator_rec = rec;
  s.controller_rec = ctl;
  return s;
}

/// Rows of [imu; refs] for a spec.
inline std::vector<std::vector<float>> random_rows(std::mt19937_64& rng, const neuroflap::snn::NetworkSpec& spec,
                                                   std::size_t ticks, float scale = 1.0f) {
  std::vector<std::vector<float>> rows(ticks);
  for (auto& r : rows) r = random_vector(rng, spec.imu_size() + spec.refs_size(), scale);
  return rows;
}

}  // namespace nftest
