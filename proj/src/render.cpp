#include "beamlat/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "beamlat/error.hpp"

namespace beamlat {

namespace {

constexpr double kFrame = 160.0;
constexpr double kHeatRange = 3.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::size_t grid_side(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
  return side * side == dim ? side : 0;
}

std::string heatmap_body(std::span<const double> sample, double x0) {
  const std::size_t side = grid_side(sample.size());
  const double cell = kFrame / static_cast<double>(side);
  std::string out;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      out += "<rect x=\"" + num(x0 + static_cast<double>(c) * cell) + "\" y=\"" +
             num(static_cast<double>(r) * cell) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
             "\" fill=\"" + heat_colour(sample[r * side + c]) + "\"/>\n";
    }
  }
  return out;
}

std::string scatter_body(std::span<const double> sample, const MixtureModel& mixture, double x0) {
  // Square view around the components' 3-sigma boxes and the sample.
  double lo = std::min(sample[0], sample[1]);
  double hi = std::max(sample[0], sample[1]);
  for (const auto& comp : mixture.components) {
    for (int k = 0; k < 2; ++k) {
      const double s = 3.0 * std::sqrt(comp.var[k]);
      lo = std::min(lo, comp.mean[k] - s);
      hi = std::max(hi, comp.mean[k] + s);
    }
  }
  const double pad = 0.05 * (hi - lo) + 1e-9;
  lo -= pad;
  hi += pad;
  const double scale = kFrame / (hi - lo);
  auto px = [&](double v) { return x0 + (v - lo) * scale; };
  auto py = [&](double v) { return kFrame - (v - lo) * scale; };

  std::string out = "<rect x=\"" + num(x0) + "\" y=\"0\" width=\"" + num(kFrame) + "\" height=\"" +
                    num(kFrame) + "\" fill=\"#ffffff\" stroke=\"#cccccc\"/>\n";
  for (const auto& comp : mixture.components) {
    out += "<ellipse cx=\"" + num(px(comp.mean[0])) + "\" cy=\"" + num(py(comp.mean[1])) + "\" rx=\"" +
           num(std::sqrt(comp.var[0]) * scale) + "\" ry=\"" + num(std::sqrt(comp.var[1]) * scale) +
           "\" fill=\"none\" stroke=\"#4c72b0\" stroke-opacity=\"" + num(0.3 + 0.7 * comp.weight) + "\"/>\n";
  }
  out += "<circle cx=\"" + num(px(sample[0])) + "\" cy=\"" + num(py(sample[1])) +
         "\" r=\"3\" fill=\"#c44e52\"/>\n";
  return out;
}

std::string frame_body(std::span<const double> sample, const World& world, RenderMode mode,
                       const std::string& token, double x0) {
  if (sample.size() != world.dim()) throw Error(ErrorKind::dimension_mismatch, "sample has the wrong length");
  return mode == RenderMode::heatmap ? heatmap_body(sample, x0)
                                     : scatter_body(sample, world.entry(token).mixture, x0);
}

std::string svg_open(double width) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(kFrame) +
         "\" viewBox=\"0 0 " + num(width) + " " + num(kFrame) + "\">\n";
}

}  // namespace

RenderMode parse_render_mode(const std::string& name) {
  if (name == "scatter") return RenderMode::scatter;
  if (name == "heatmap") return RenderMode::heatmap;
  throw Error(ErrorKind::mode_mismatch, "unknown render mode '" + name + "'");
}

std::string to_string(RenderMode mode) { return mode == RenderMode::scatter ? "scatter" : "heatmap"; }

void check_render_mode(std::size_t dim, RenderMode mode) {
  if (mode == RenderMode::scatter && dim != 2)
    throw Error(ErrorKind::mode_mismatch, "scatter rendering needs d = 2, got d = " + std::to_string(dim));
  if (mode == RenderMode::heatmap && grid_side(dim) == 0)
    throw Error(ErrorKind::mode_mismatch, "heatmap rendering needs a square d, got d = " + std::to_string(dim));
}

std::string heat_colour(double value) {
  // Blue (-3) through near-white (0) to red (+3).
  static constexpr double lo[3] = {59, 76, 192};
  static constexpr double mid[3] = {247, 247, 247};
  static constexpr double hi[3] = {180, 4, 38};
  const double t = (std::clamp(value, -kHeatRange, kHeatRange) + kHeatRange) / (2.0 * kHeatRange);
  const double* a = t < 0.5 ? lo : mid;
  const double* b = t < 0.5 ? mid : hi;
  const double u = t < 0.5 ? t * 2.0 : (t - 0.5) * 2.0;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(a[0] + (b[0] - a[0]) * u)),
                static_cast<int>(std::lround(a[1] + (b[1] - a[1]) * u)),
                static_cast<int>(std::lround(a[2] + (b[2] - a[2]) * u)));
  return buf;
}

std::string render_frame(std::span<const double> sample, const World& world, RenderMode mode,
                         const std::string& token) {
  check_render_mode(world.dim(), mode);
  return svg_open(kFrame) + frame_body(sample, world, mode, token, 0.0) + "</svg>\n";
}

std::string render_sequence(std::span<const std::vector<double>> samples, const World& world,
                            RenderMode mode, std::span<const std::string> tokens) {
  check_render_mode(world.dim(), mode);
  if (tokens.size() != samples.size())
    throw Error(ErrorKind::dimension_mismatch, "one token per rendered sample expected");
  constexpr double gap = 10.0;
  const double width = samples.empty() ? kFrame
                                       : static_cast<double>(samples.size()) * (kFrame + gap) - gap;
  std::string out = svg_open(width);
  for (std::size_t i = 0; i < samples.size(); ++i)
    out += frame_body(samples[i], world, mode, tokens[i], static_cast<double>(i) * (kFrame + gap));
  return out + "</svg>\n";
}

}  // namespace beamlat
