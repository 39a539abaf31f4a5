#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "neuroflap/pipeline.hpp"

namespace neuroflap::pipeline {

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 320.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 40.0;
constexpr std::size_t kMaxPoints = 4000;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

void write_svg_plot(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
                    const std::vector<PlotSeries>& series, const std::string& y_label) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (double v : x) {
    x0 = std::min(x0, v);
    x1 = std::max(x1, v);
  }
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  if (!(y1 > y0)) y0 -= 1.0, y1 += 1.0;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (y1 - v) / (y1 - y0) * ph; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                kWidth, kHeight);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"20\" font-size=\"14\">", kLeft);
  out << buf << escape(title) << "</text>\n";
  std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#888\"/>\n",
                kLeft, kTop, pw, ph);
  out << buf;
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n", kLeft - 6,
                  py(v) + 4, v);
    out << buf;
    const double u = x0 + (x1 - x0) * i / 4.0;
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n", px(u),
                  kHeight - kBottom + 16, u);
    out << buf;
  }
  if (!y_label.empty()) {
    std::snprintf(buf, sizeof(buf), "<text x=\"14\" y=\"%.1f\" transform=\"rotate(-90 14 %.1f)\" text-anchor=\"middle\">",
                  kTop + ph / 2, kTop + ph / 2);
    out << buf << escape(y_label) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    const std::string color = ser.color.empty() ? kPalette[s % 6] : ser.color;
    const std::size_t n = std::min(ser.values.size(), x.size());
    const std::size_t stride = std::max<std::size_t>(1, n / kMaxPoints);
    out << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < n; i += stride) {
      if (!std::isfinite(ser.values[i])) continue;
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px(x[i]), py(ser.values[i]));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof(buf), "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">", kWidth - kRight - 150,
                  kTop + 16 + 14.0 * static_cast<double>(s), color.c_str());
    out << buf << escape(ser.label) << "</text>\n";
  }
  out << "</svg>\n";
}

namespace {

std::vector<double> row(const Eigen::MatrixXd& m, Eigen::Index r, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = m(r, static_cast<Eigen::Index>(i));
  return v;
}

}  // namespace

void write_trace_plots(const EvalTrace& trace, snn::ControllerVariant variant, const std::filesystem::path& dir,
                       const std::string& stem) {
  std::filesystem::create_directories(dir);
  const std::size_t n = trace.time.size();
  write_svg_plot(dir / (stem + "_pitch.svg"), "Pitch estimate", trace.time,
                 {{"expert", row(trace.state_true, 1, n), "#444444"}, {"network", row(trace.state_pred, 1, n), ""}},
                 "deg");
  write_svg_plot(dir / (stem + "_roll.svg"), "Roll estimate", trace.time,
                 {{"expert", row(trace.state_true, 0, n), "#444444"}, {"network", row(trace.state_pred, 0, n), ""}},
                 "deg");
  const char* unit = variant == snn::ControllerVariant::cpg_agnostic ? "us" : "deg";
  std::vector<PlotSeries> control;
  for (Eigen::Index c = 0; c < trace.control_true.rows(); ++c) {
    control.push_back({"expert " + std::to_string(c), row(trace.control_true, c, n), c == 0 ? "#444444" : "#999999"});
    control.push_back({"network " + std::to_string(c), row(trace.control_pred, c, n), ""});
  }
  write_svg_plot(dir / (stem + "_command.svg"), std::string("Controller output (") + std::string(snn::to_string(variant)) + ")",
                 trace.time, control, unit);
  // Pulse widths are only legible over a few strokes.
  const std::size_t m = std::min<std::size_t>(n, 300);
  const std::vector<double> t(trace.time.begin(), trace.time.begin() + static_cast<long>(m));
  write_svg_plot(dir / (stem + "_pwm.svg"), "Left servo pulse width", t,
                 {{"expert", row(trace.pwm_true, 0, m), "#444444"}, {"network", row(trace.pwm_pred, 0, m), ""}}, "us");
}

void write_trace_csv(const EvalTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "time,roll_true,roll_pred,pitch_true,pitch_pred,yaw_rate_true,yaw_rate_pred";
  for (Eigen::Index c = 0; c < trace.control_true.rows(); ++c) out << ",control" << c << "_true,control" << c << "_pred";
  out << ",pwm_L_true,pwm_L_pred,pwm_R_true,pwm_R_pred\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.time.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    std::snprintf(buf, sizeof(buf), "%.2f", trace.time[i]);
    out << buf;
    auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), ",%.9g", v);
      out << buf;
    };
    for (Eigen::Index r = 0; r < 3; ++r) {
      put(trace.state_true(r, k));
      put(trace.state_pred(r, k));
    }
    for (Eigen::Index c = 0; c < trace.control_true.rows(); ++c) {
      put(trace.control_true(c, k));
      put(trace.control_pred(c, k));
    }
    for (Eigen::Index c = 0; c < 2; ++c) {
      put(trace.pwm_true(c, k));
      put(trace.pwm_pred(c, k));
    }
    out << '\n';
  }
}

}  // namespace neuroflap::pipeline
