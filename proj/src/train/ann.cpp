#include "neuroflap/train/ann.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>

#include "neuroflap/error.hpp"

namespace neuroflap::train {

namespace {

std::span<double> as_span(Eigen::MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

Eigen::MatrixXd relu(const Eigen::MatrixXd& m) { return m.cwiseMax(0.0); }

}  // namespace

AnnParams AnnParams::zeros_like() const {
  AnnParams z = *this;
  z.set_zero();
  return z;
}

void AnnParams::set_zero() {
  for (auto& l : layers) {
    l.w_in.setZero();
    l.w_rec.setZero();
  }
  w_out.setZero();
}

std::vector<ParamView> AnnParams::views(AnnParams& grads) {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.push_back({prefix + "w_in", as_span(layers[l].w_in), as_span(grads.layers[l].w_in)});
    if (layers[l].kind == snn::LayerKind::recurrent) {
      out.push_back({prefix + "w_rec", as_span(layers[l].w_rec), as_span(grads.layers[l].w_rec)});
    }
  }
  out.push_back({"w_out", as_span(w_out), as_span(grads.w_out)});
  return out;
}

AnnParams init_ann(std::size_t inputs, std::span<const std::size_t> hidden, std::span<const snn::LayerKind> kinds,
                   std::size_t outputs, const AnnInit& init, std::uint64_t seed) {
  require(hidden.size() == kinds.size() && !hidden.empty(), "init_ann: layer sizes and kinds must align");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](std::size_t r, std::size_t c, double stddev) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stddev * normal(rng);
    }
    return m;
  };
  AnnParams p;
  std::size_t d = inputs;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    AnnLayerParams layer;
    layer.kind = kinds[l];
    // He-style fan-in scaling keeps rectifier activations at unit order.
    layer.w_in = gaussian(hidden[l], d, init.input_gain * std::sqrt(2.0 / static_cast<double>(d)));
    if (layer.kind == snn::LayerKind::recurrent) {
      layer.w_rec = gaussian(hidden[l], hidden[l], init.rec_gain / std::sqrt(static_cast<double>(hidden[l])));
    }
    p.layers.push_back(std::move(layer));
    d = hidden[l];
  }
  p.w_out = gaussian(outputs, d, init.out_gain / std::sqrt(static_cast<double>(d)));
  return p;
}

Sequence ann_forward(const AnnParams& params, const Eigen::MatrixXd& inputs, AnnTape* tape) {
  require(!params.layers.empty(), "ann_forward: network has no layers");
  require(static_cast<std::size_t>(inputs.rows()) == params.input_size(), "ann_forward: input width mismatch");
  const Eigen::Index steps = inputs.cols();
  AnnTape local;
  AnnTape& t = tape ? *tape : local;
  t.inputs = inputs;
  t.hidden.resize(params.layers.size());

  const Eigen::MatrixXd* below = &inputs;
  bool below_has_zero_col = false;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    auto& h = t.hidden[l];
    h.setZero(p.w_in.rows(), steps + 1);
    const Eigen::MatrixXd drive = below_has_zero_col ? Eigen::MatrixXd(p.w_in * below->rightCols(steps))
                                                     : Eigen::MatrixXd(p.w_in * *below);
    if (p.kind == snn::LayerKind::recurrent) {
      for (Eigen::Index k = 1; k <= steps; ++k) {
        h.col(k) = (drive.col(k - 1) + p.w_rec * h.col(k - 1)).cwiseMax(0.0);
      }
    } else {
      h.rightCols(steps) = relu(drive);
    }
    below = &h;
    below_has_zero_col = true;
  }
  Sequence out = params.w_out * t.hidden.back().rightCols(steps);
  if (!tape) t = AnnTape{};
  return out;
}

void ann_backward(const AnnParams& params, const AnnTape& tape, const Sequence& grad_out, AnnParams& grads) {
  require(!tape.empty() && tape.hidden.size() == params.layers.size(), "ann_backward: no recorded forward pass");
  const Eigen::Index steps = static_cast<Eigen::Index>(tape.steps());
  require(grad_out.cols() == steps && static_cast<std::size_t>(grad_out.rows()) == params.output_size(),
          "ann_backward: output gradient shape mismatch");

  grads.w_out.noalias() += grad_out * tape.hidden.back().rightCols(steps).transpose();
  Eigen::MatrixXd upstream = params.w_out.transpose() * grad_out;  // N x T, gradient w.r.t. h[1..T]

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& p = params.layers[li];
    auto& g = grads.layers[li];
    const auto& h = tape.hidden[li];
    Eigen::MatrixXd gpre(h.rows(), steps);
    if (p.kind == snn::LayerKind::recurrent) {
      Eigen::VectorXd carry = Eigen::VectorXd::Zero(h.rows());
      for (Eigen::Index k = steps; k >= 1; --k) {
        Eigen::VectorXd gh = upstream.col(k - 1) + carry;
        gpre.col(k - 1) = (h.col(k).array() > 0.0).select(gh, 0.0);
        carry.noalias() = p.w_rec.transpose() * gpre.col(k - 1);
      }
      g.w_rec.noalias() += gpre * h.leftCols(steps).transpose();
    } else {
      gpre = (h.rightCols(steps).array() > 0.0).select(upstream, 0.0);
    }
    if (li == 0) {
      g.w_in.noalias() += gpre * tape.inputs.transpose();
    } else {
      g.w_in.noalias() += gpre * tape.hidden[li - 1].rightCols(steps).transpose();
      upstream = p.w_in.transpose() * gpre;
    }
  }
}

AnnModel::AnnModel(AnnParams params) : params_(std::move(params)), grads_(params_.zeros_like()) {}

Sequence AnnModel::forward(const Eigen::MatrixXd& inputs) { return ann_forward(params_, inputs, &tape_); }

void AnnModel::backward(const Sequence& grad_out) { ann_backward(params_, tape_, grad_out, grads_); }

std::unique_ptr<Model> AnnModel::clone() const { return std::make_unique<AnnModel>(params_); }

// ---- serialization ----------------------------------------------------------------

namespace {

constexpr const char* kAnnMagic = "neuroflap-ann";

void write_doubles(std::ostream& out, const char* key, const double* data, std::size_t n) {
  out << key << ' ' << n;
  char buf[48];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), " %a", data[i]);
    out << buf;
  }
  out << '\n';
}

void write_matrix(std::ostream& out, const char* key, const Eigen::MatrixXd& m) {
  out << key << "_shape " << m.rows() << ' ' << m.cols() << '\n';
  // Row-major on disk to match the spiking format.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  write_doubles(out, key, r.data(), static_cast<std::size_t>(r.size()));
}

void write_stage(std::ostream& out, const char* name, const AnnStage& s) {
  out << "stage " << name << '\n';
  write_doubles(out, "input_scale", s.input_scale.data(), s.input_scale.size());
  write_doubles(out, "output_scale", s.output_scale.data(), s.output_scale.size());
  out << "layers " << s.params.layers.size() << '\n';
  for (const auto& l : s.params.layers) {
    out << "layer " << snn::to_string(l.kind) << '\n';
    write_matrix(out, "w_in", l.w_in);
    if (l.kind == snn::LayerKind::recurrent) write_matrix(out, "w_rec", l.w_rec);
  }
  write_matrix(out, "w_out", s.params.w_out);
  out << "end\n";
}

class AnnReader {
 public:
  explicit AnnReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ContractViolation("ann file truncated");
    return w;
  }
  void expect(const std::string& token) {
    auto w = word();
    if (w != token) throw ContractViolation("ann file: expected '" + token + "', found '" + w + "'");
  }
  std::size_t count() {
    auto w = word();
    char* end = nullptr;
    auto v = std::strtoull(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') throw ContractViolation("ann file: bad count '" + w + "'");
    return static_cast<std::size_t>(v);
  }
  std::vector<double> values(const std::string& key) {
    expect(key);
    std::vector<double> out(count());
    for (auto& v : out) {
      auto w = word();
      char* end = nullptr;
      v = std::strtod(w.c_str(), &end);
      if (end == w.c_str() || *end != '\0') throw ContractViolation("ann file: bad value '" + w + "' in " + key);
    }
    return out;
  }
  Eigen::MatrixXd matrix(const std::string& key) {
    expect(key + "_shape");
    const auto rows = count();
    const auto cols = count();
    auto v = values(key);
    require(v.size() == rows * cols, "ann file: '" + key + "' has wrong length");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r * cols + c];
    }
    return m;
  }
  AnnStage stage(const std::string& name) {
    expect("stage");
    expect(name);
    AnnStage s;
    s.input_scale = values("input_scale");
    s.output_scale = values("output_scale");
    expect("layers");
    const auto n = count();
    for (std::size_t i = 0; i < n; ++i) {
      expect("layer");
      AnnLayerParams l;
      l.kind = snn::parse_layer_kind(word());
      l.w_in = matrix("w_in");
      if (l.kind == snn::LayerKind::recurrent) l.w_rec = matrix("w_rec");
      s.params.layers.push_back(std::move(l));
    }
    s.params.w_out = matrix("w_out");
    expect("end");
    require(!s.params.layers.empty(), "ann file: stage has no layers");
    require(s.input_scale.size() == s.params.input_size() && s.output_scale.size() == s.params.output_size(),
            "ann file: scale length mismatch");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_ann(const AnnNetwork& net, std::ostream& out) {
  out << kAnnMagic << " 1\n";
  out << "variant " << snn::to_string(net.variant) << '\n';
  write_stage(out, "estimator", net.estimator);
  write_stage(out, "controller", net.controller);
}

AnnNetwork load_ann(std::istream& in) {
  AnnReader r(in);
  r.expect(kAnnMagic);
  r.expect("1");
  r.expect("variant");
  AnnNetwork net;
  net.variant = snn::parse_controller_variant(r.word());
  net.estimator = r.stage("estimator");
  net.controller = r.stage("controller");
  return net;
}

void save_ann_file(const AnnNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_ann(net, out);
}

AnnNetwork load_ann_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_ann(in);
}

// ---- 32-bit runtime -------------------------------------------------------------

namespace {

snn::Matrix to_float_matrix(const Eigen::MatrixXd& m) {
  snn::Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      out(r, c) = static_cast<float>(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  return out;
}

void matvec_add(const snn::Matrix& w, const float* x, float* y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const float* row = w.data.data() + r * w.cols;
    float acc = y[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

}  // namespace

AnnRuntime::AnnRuntime(const AnnStage& stage) {
  require(!stage.params.layers.empty(), "AnnRuntime: stage has no layers");
  input_size_ = stage.params.input_size();
  for (const auto& l : stage.params.layers) {
    Layer layer{l.kind, to_float_matrix(l.w_in), {}, {}, {}};
    if (l.kind == snn::LayerKind::recurrent) layer.w_rec = to_float_matrix(l.w_rec);
    layer.h.assign(layer.w_in.rows, 0.0f);
    layer.next.assign(layer.w_in.rows, 0.0f);
    layers_.push_back(std::move(layer));
  }
  w_out_ = to_float_matrix(stage.params.w_out);
  in_scale_.assign(stage.input_scale.begin(), stage.input_scale.end());
  out_scale_.assign(stage.output_scale.begin(), stage.output_scale.end());
  require(in_scale_.size() == input_size_ && out_scale_.size() == w_out_.rows, "AnnRuntime: scale length mismatch");
  scaled_.assign(input_size_, 0.0f);
}

void AnnRuntime::reset() {
  for (auto& l : layers_) std::fill(l.h.begin(), l.h.end(), 0.0f);
}

void AnnRuntime::step(std::span<const float> in, std::span<float> out) {
  require(in.size() == input_size_ && out.size() == w_out_.rows, "AnnRuntime::step: size mismatch");
  for (std::size_t i = 0; i < input_size_; ++i) scaled_[i] = in[i] * in_scale_[i];
  const float* x = scaled_.data();
  for (auto& l : layers_) {
    std::fill(l.next.begin(), l.next.end(), 0.0f);
    matvec_add(l.w_in, x, l.next.data());
    if (l.kind == snn::LayerKind::recurrent) matvec_add(l.w_rec, l.h.data(), l.next.data());
    for (std::size_t i = 0; i < l.next.size(); ++i) l.h[i] = l.next[i] > 0.0f ? l.next[i] : 0.0f;
    x = l.h.data();
  }
  std::fill(out.begin(), out.end(), 0.0f);
  matvec_add(w_out_, x, out.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= out_scale_[i];
}

std::uint64_t AnnRuntime::macs_per_tick() const {
  std::uint64_t total = w_out_.rows * w_out_.cols;
  for (const auto& l : layers_) total += l.w_in.rows * l.w_in.cols + l.w_rec.rows * l.w_rec.cols;
  return total;
}

}  // namespace neuroflap::train
