#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "neuroflap/error.hpp"
#include "neuroflap/snn/network.hpp"
#include "neuroflap/snn/serialize.hpp"

using namespace neuroflap;
using namespace neuroflap::snn;
using nftest::random_matrix;
using nftest::random_spikes;
using nftest::random_vector;

namespace {

SpikingLayer single(float alpha, float beta, float theta, std::size_t inputs = 1, LayerKind kind = LayerKind::feedforward) {
  SpikingLayer l;
  l.kind = kind;
  l.w_in = Matrix(1, inputs);
  if (kind == LayerKind::recurrent) l.w_rec = Matrix(1, 1);
  l.params = {{alpha}, {beta}, {theta}};
  l.state = LayerState(1);
  l.prepare();
  return l;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::vector<float> naive_matvec(const Matrix& w, std::span<const float> x) {
  std::vector<float> out(w.rows, 0.0f);
  for (std::size_t i = 0; i < w.rows; ++i) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < w.cols; ++j) acc = acc + w(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

std::vector<float> as_float(std::span<const std::uint8_t> s) { return {s.begin(), s.end()}; }

struct Trace {
  std::vector<std::vector<float>> state, control;
  bool operator==(const Trace&) const = default;
};

Trace run(NetworkSpec& spec, const std::vector<std::vector<float>>& rows) {
  Trace t;
  const std::size_t d = spec.imu_size();
  for (const auto& r : rows) {
    auto out = network_step(spec, std::span<const float>(r).first(d), std::span<const float>(r).subspan(d));
    t.state.push_back(out.state_estimate);
    t.control.push_back(out.control);
  }
  return t;
}

}  // namespace

TEST_SUITE("equations") {
  TEST_CASE("input projection: identity and zero matrices") {
    const std::vector<float> x{1.0f, -2.0f, 0.5f};
    CHECK(inject_input(Matrix::identity(3), x) == x);
    CHECK(inject_input(Matrix(3, 3), x) == std::vector<float>{0.0f, 0.0f, 0.0f});
    CHECK_THROWS_AS(inject_input(Matrix(3, 2), x), ContractViolation);
  }

  TEST_CASE("synaptic current: pure leak and single synapse") {
    auto l = single(0.9f, 0.8f, 1.0f);
    l.state.syn_current = {1.0f};
    CHECK(step_synaptic_current(l.state, {}, {}, std::vector<float>{0.0f}, l) == std::vector<float>{0.9f});

    auto m = single(0.5f, 0.8f, 1.0f);
    m.w_in(0, 0) = 2.0f;
    const std::vector<std::uint8_t> spike{1};
    CHECK(step_synaptic_current(m.state, spike, {}, std::vector<float>{0.0f}, m) == std::vector<float>{2.0f});

    const std::vector<std::uint8_t> bad{2};
    CHECK_THROWS_AS(step_synaptic_current(m.state, bad, {}, std::vector<float>{0.0f}, m), ContractViolation);
  }

  TEST_CASE("membrane: leak and hard reset") {
    auto l = single(0.5f, 0.8f, 1.0f);
    l.state.membrane = {1.0f};
    l.state.syn_current = {0.1f};
    l.state.spikes = {0};
    CHECK(step_membrane(l.state, l)[0] == doctest::Approx(0.9f).epsilon(1e-7));
    CHECK(step_membrane(l.state, l)[0] == 0.8f * 1.0f + 0.1f);
    l.state.spikes = {1};
    CHECK(step_membrane(l.state, l)[0] == 0.1f);
    // Independent of the previous potential once a spike fired.
    l.state.membrane = {-37.0f};
    CHECK(step_membrane(l.state, l)[0] == 0.1f);
  }

  TEST_CASE("fire: threshold comparisons with H(0) = 1") {
    const std::vector<float> theta{1.0f};
    CHECK(fire(std::vector<float>{1.2f}, theta)[0] == 1);
    CHECK(fire(std::vector<float>{0.99f}, theta)[0] == 0);
    CHECK(fire(std::vector<float>{1.0f}, theta)[0] == 1);
    CHECK_THROWS_AS(fire(std::vector<float>{NAN}, theta), ContractViolation);
  }

  TEST_CASE("readout: zero spikes and column selection") {
    std::mt19937_64 rng(5);
    const auto w = random_matrix(rng, 3, 5);
    CHECK(readout(w, std::vector<std::uint8_t>(5, 0)) == std::vector<float>{0.0f, 0.0f, 0.0f});
    for (std::size_t k = 0; k < 5; ++k) {
      std::vector<std::uint8_t> s(5, 0);
      s[k] = 1;
      const auto y = readout(w, s);
      for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == w(i, k));
    }
  }

  TEST_CASE("active set") {
    CHECK(active_set(std::vector<std::uint8_t>{0, 1, 0, 1}) == std::vector<std::uint32_t>{1, 3});
    CHECK(active_set(std::vector<std::uint8_t>{0, 0, 0}).empty());
    CHECK(active_set(std::vector<std::uint8_t>(5, 1)) == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
  }

  TEST_CASE("event-driven accumulation: empty and single column") {
    std::mt19937_64 rng(6);
    const auto w = random_matrix(rng, 4, 6);
    CHECK(event_driven_accumulate(w, {}) == std::vector<float>(4, 0.0f));
    for (std::uint32_t j = 0; j < 6; ++j) {
      const std::vector<std::uint32_t> a{j};
      const auto p = event_driven_accumulate(w, a);
      for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == w(i, j));
    }
    const std::vector<std::uint32_t> out_of_range{6};
    CHECK_THROWS_AS(event_driven_accumulate(w, out_of_range), ContractViolation);
  }

  TEST_CASE("network quiescence from reset with zero input") {
    std::mt19937_64 rng(7);
    auto spec = nftest::random_network(rng, nftest::small_shape());
    // Drive it first so reset has something to clear.
    run(spec, nftest::random_rows(rng, spec, 20, 3.0f));
    reset_state(spec);
    for (const auto* sub : {&spec.estimator, &spec.controller}) {
      for (const auto& l : sub->layers) {
        for (std::size_t i = 0; i < l.size(); ++i) {
          CHECK(l.state.syn_current[i] == 0.0f);
          CHECK(l.state.membrane[i] == 0.0f);
          CHECK(l.state.spikes[i] == 0);
        }
      }
    }
    const std::vector<std::vector<float>> zeros(50, std::vector<float>(spec.imu_size() + spec.refs_size(), 0.0f));
    const auto t = run(spec, zeros);
    for (std::size_t k = 0; k < zeros.size(); ++k) {
      for (float v : t.state[k]) CHECK(v == 0.0f);
      for (float v : t.control[k]) CHECK(v == 0.0f);
    }
    for (auto c : spike_counts(spec)) CHECK(c == 0u);
  }

  TEST_CASE("reset then rerun reproduces the trace") {
    std::mt19937_64 rng(8);
    auto spec = nftest::random_network(rng, nftest::small_shape());
    const auto rows = nftest::random_rows(rng, spec, 100, 2.0f);
    reset_state(spec);
    const auto a = run(spec, rows);
    reset_state(spec);
    const auto b = run(spec, rows);
    CHECK(a == b);
  }
}

TEST_SUITE("snn") {
  TEST_CASE("input projection matches a triple-loop product") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = random_matrix(rng, 4, 3);
      const auto x = random_vector(rng, 3);
      CHECK(same_bits(inject_input(w, x), naive_matvec(w, x)));
    }
  }

  TEST_CASE("synaptic current matches a dense reference") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      SpikingLayer l;
      l.kind = LayerKind::recurrent;
      l.w_in = random_matrix(rng, 7, 5);
      l.w_rec = random_matrix(rng, 7, 7);
      l.params = {std::vector<float>(7, 0.7f), std::vector<float>(7, 0.9f), std::vector<float>(7, 1.0f)};
      l.state = LayerState(7);
      l.state.syn_current = random_vector(rng, 7);
      const auto ff = random_spikes(rng, 5, 0.4);
      const auto rec = random_spikes(rng, 7, 0.4);
      const auto u = random_vector(rng, 7);
      const auto a = naive_matvec(l.w_in, as_float(ff));
      const auto b = naive_matvec(l.w_rec, as_float(rec));
      std::vector<float> expect(7);
      for (std::size_t i = 0; i < 7; ++i) {
        float c = l.params.alpha[i] * l.state.syn_current[i];
        c = c + a[i];
        c = c + b[i];
        c = c + u[i];
        expect[i] = c;
      }
      CHECK(same_bits(step_synaptic_current(l.state, ff, rec, u, l), expect));
    }
  }

  TEST_CASE("membrane matches an elementwise loop") {
    std::mt19937_64 rng(13);
    SpikingLayer l;
    l.w_in = Matrix(9, 1);
    std::uniform_real_distribution<float> leak(0.1f, 0.99f);
    l.params.alpha.assign(9, 0.5f);
    l.params.theta.assign(9, 1.0f);
    for (int i = 0; i < 9; ++i) l.params.beta.push_back(leak(rng));
    l.state = LayerState(9);
    l.state.membrane = random_vector(rng, 9);
    l.state.syn_current = random_vector(rng, 9);
    l.state.spikes = random_spikes(rng, 9, 0.5);
    const auto v = step_membrane(l.state, l);
    for (std::size_t i = 0; i < 9; ++i) {
      const float expect = l.state.spikes[i] ? l.state.syn_current[i]
                                             : l.params.beta[i] * l.state.membrane[i] + l.state.syn_current[i];
      CHECK(v[i] == expect);
    }
  }

  TEST_CASE("readout matches a dense product") {
    std::mt19937_64 rng(14);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = random_matrix(rng, 3, 11);
      const auto s = random_spikes(rng, 11, 0.3);
      CHECK(same_bits(readout(w, s), naive_matvec(w, as_float(s))));
    }
  }

  TEST_CASE("leak decays geometrically without input") {
    auto l = single(0.75f, 0.5f, 1e9f);
    l.state.syn_current = {1.0f};
    float expect = 1.0f;
    std::vector<float> x{0.0f};
    for (int k = 0; k < 10; ++k) {
      layer_step(l, x, {}, ExecMode::dense);
      expect *= 0.75f;
      CHECK(l.state.syn_current[0] == expect);
    }
  }

  TEST_CASE("reset mid-sequence equals a fresh network") {
    std::mt19937_64 rng(15);
    auto spec = nftest::random_network(rng, nftest::small_shape());
    auto fresh = spec;
    const auto rows = nftest::random_rows(rng, spec, 120, 2.0f);
    const std::vector<std::vector<float>> head(rows.begin(), rows.begin() + 60);
    const std::vector<std::vector<float>> tail(rows.begin() + 60, rows.end());
    run(spec, head);
    reset_state(spec);
    reset_state(fresh);
    CHECK(run(spec, tail) == run(fresh, tail));
  }

  TEST_CASE("outputs up to t do not depend on later inputs") {
    std::mt19937_64 rng(16);
    auto spec = nftest::random_network(rng, nftest::small_shape());
    auto other = spec;
    auto rows = nftest::random_rows(rng, spec, 80, 2.0f);
    auto changed = rows;
    for (std::size_t k = 40; k < changed.size(); ++k) changed[k] = nftest::random_vector(rng, changed[k].size(), 5.0f);
    const auto a = run(spec, rows);
    const auto b = run(other, changed);
    for (std::size_t k = 0; k < 40; ++k) {
      CHECK(a.state[k] == b.state[k]);
      CHECK(a.control[k] == b.control[k]);
    }
  }

  TEST_CASE("stored trace is reproduced after a save/load round trip") {
    std::mt19937_64 rng(17);
    auto spec = nftest::random_network(rng, nftest::small_shape(12, 12, 10));
    const auto rows = nftest::random_rows(rng, spec, 300, 2.0f);
    const auto dir = std::filesystem::temp_directory_path() / "neuroflap_trace_test";
    std::filesystem::create_directories(dir);
    save_network_file(spec, dir / "net.txt");
    const auto recorded = run(spec, rows);
    auto reloaded = load_network_file(dir / "net.txt");
    CHECK(network_hash(reloaded) == network_hash(spec));
    CHECK(run(reloaded, rows) == recorded);
    std::filesystem::remove_all(dir);
  }
}
