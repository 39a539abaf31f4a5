#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "neuroflap/codegen/emit.hpp"
#include "neuroflap/codegen/validate.hpp"
#include "neuroflap/error.hpp"
#include "neuroflap/snn/serialize.hpp"

using namespace neuroflap;
using namespace neuroflap::codegen;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("neuroflap_codegen_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

HarnessConfig test_harness(const std::filesystem::path& work_dir = {}) {
  HarnessConfig h;
  h.c_compiler = NEUROFLAP_C_COMPILER;
  h.driver_source = NEUROFLAP_TEST_HARNESS_DRIVER;
  h.work_dir = work_dir;
  return h;
}

snn::NetworkSpec toy_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nftest::random_network(rng, nftest::small_shape(12, 10, 8), 2.0f);
}

snn::NetworkSpec zero_spec() {
  auto spec = snn::make_network(nftest::small_shape(5, 4, 3));
  for (auto* sub : {&spec.estimator, &spec.controller}) {
    for (auto& l : sub->layers) {
      std::fill(l.params.alpha.begin(), l.params.alpha.end(), 0.8f);
      std::fill(l.params.beta.begin(), l.params.beta.end(), 0.8f);
      std::fill(l.params.theta.begin(), l.params.theta.end(), 1.0f);
    }
  }
  spec.prepare();
  return spec;
}

}  // namespace

TEST_SUITE("codegen") {
  TEST_CASE("emission is deterministic") {
    const auto spec = toy_spec(1);
    for (auto mode : {snn::ExecMode::dense, snn::ExecMode::event_driven}) {
      CHECK(emit(spec, mode) == emit(spec, mode));
    }
    CHECK(emit(spec, snn::ExecMode::dense).kernel_text != emit(spec, snn::ExecMode::event_driven).kernel_text);
  }

  TEST_CASE("non-finite weights are refused") {
    auto spec = toy_spec(2);
    spec.controller.readout.w_out.data[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(emit(spec, snn::ExecMode::dense), ContractViolation);
  }

  TEST_CASE("manifest hash integrity") {
    const auto spec = toy_spec(3);
    const auto art = emit(spec, snn::ExecMode::event_driven);
    CHECK_NOTHROW(verify_artifact(art, spec));
    auto other = spec;
    other.estimator.layers[0].w_in.data[0] += 1e-2f;
    CHECK_THROWS_AS(verify_artifact(art, other), ContractViolation);
    auto forged = art;
    const auto pos = forged.header_text.find(snn::network_hash(spec));
    REQUIRE(pos != std::string::npos);
    forged.header_text.replace(pos, 16, "0000000000000000");
    CHECK_THROWS_AS(verify_artifact(forged, spec), ContractViolation);
  }

  TEST_CASE("artifact files round-trip") {
    const auto dir = scratch_dir("roundtrip");
    const auto art = emit(toy_spec(4), snn::ExecMode::dense, "toy");
    write_artifact(art, dir);
    CHECK(read_artifact(dir) == art);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("self-comparison has zero deviation") {
    std::mt19937_64 rng(5);
    const auto spec = toy_spec(5);
    const auto ref = reference_run(spec, nftest::random_rows(rng, spec, 200));
    const auto report = compare_traces(ref, ref, 0.0);
    CHECK(report.status == ValidationStatus::passed);
    for (double d : report.max_abs_deviation) CHECK(d == 0.0);
    CHECK(report.spikes_match);
  }

  TEST_CASE("missing harness is reported as skipped") {
    const auto spec = toy_spec(6);
    HarnessConfig none;
    const auto report = validate_export(emit(spec, snn::ExecMode::dense), {}, {}, 1e-5, none);
    CHECK(report.status == ValidationStatus::skipped);
    HarnessConfig missing = test_harness();
    missing.driver_source = "/nonexistent/driver.c";
    CHECK(validate_export(emit(spec, snn::ExecMode::dense), {}, {}, 1e-5, missing).status ==
          ValidationStatus::skipped);
  }

  TEST_CASE("compiled artifact matches the reference runtime") {
    std::mt19937_64 rng(7);
    const auto spec = toy_spec(7);
    const auto rows = nftest::random_rows(rng, spec, 1000, 1.5f);
    const auto ref = reference_run(spec, rows);
    for (auto mode : {snn::ExecMode::dense, snn::ExecMode::event_driven}) {
      const auto report = validate_export(emit(spec, mode), rows, ref, 1e-5, test_harness());
      INFO(report.message);
      CHECK(report.status == ValidationStatus::passed);
      CHECK(report.spikes_match);
      for (double d : report.max_abs_deviation) CHECK(d <= 1e-5);
    }
  }

  TEST_CASE("perturbed weight fails validation") {
    std::mt19937_64 rng(8);
    const auto spec = toy_spec(8);
    const auto rows = nftest::random_rows(rng, spec, 5000, 1.5f);
    const auto ref = reference_run(spec, rows);
    auto faulty = spec;
    // Outputs only see spikes, so the sequence must be long enough for the drift to flip one.
    faulty.estimator.layers[0].w_in(0, 0) += 1e-2f;
    const auto report = validate_export(emit(faulty, snn::ExecMode::event_driven), rows, ref, 1e-5, test_harness());
    CHECK(report.status == ValidationStatus::failed);
  }

  TEST_CASE("zero-weight artifact outputs zeros") {
    std::mt19937_64 rng(9);
    const auto spec = zero_spec();
    const auto rows = nftest::random_rows(rng, spec, 100, 5.0f);
    const auto ref = reference_run(spec, rows);
    for (const auto& out : ref.outputs) {
      for (float v : out) CHECK(v == 0.0f);
    }
    const auto report = validate_export(emit(spec, snn::ExecMode::dense), rows, ref, 0.0, test_harness());
    CHECK(report.status == ValidationStatus::passed);
  }

  TEST_CASE("harness driver handles empty and malformed input") {
    const auto dir = scratch_dir("driver");
    const auto spec = toy_spec(10);
    const auto report = validate_export(emit(spec, snn::ExecMode::dense), {}, reference_run(spec, {}), 1e-5,
                                        test_harness(dir));
    REQUIRE(report.status == ValidationStatus::passed);
    const auto exe = dir / "harness";
    REQUIRE(std::filesystem::exists(exe));
    { std::ofstream(dir / "empty.csv"); }
    const auto run = [&](const char* in) {
      const std::string cmd = exe.string() + " " + (dir / in).string() + " " + (dir / "out.csv").string() +
                              " > /dev/null 2>&1";
      return std::system(cmd.c_str());
    };
    CHECK(run("empty.csv") == 0);
    CHECK(std::filesystem::file_size(dir / "out.csv") == 0);
    { std::ofstream(dir / "bad.csv") << "1,2,x\n"; }
    CHECK(run("bad.csv") != 0);
    std::filesystem::remove_all(dir);
  }
}
