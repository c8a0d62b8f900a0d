#pragma once

// SVG renderings of generated samples for side-by-side comparison.
//
//   scatter  (d = 2): the sample as a point over the 1-sigma ellipses of the
//                     step token's mixture components.
//   heatmap  (d = k*k): a k x k grid, diverging colour scale fixed to [-3, 3].

#include <span>
#include <string>
#include <vector>

#include "beamlat/world.hpp"

namespace beamlat {

enum class RenderMode { scatter, heatmap };

RenderMode parse_render_mode(const std::string& name);
std::string to_string(RenderMode mode);

// Throws mode_mismatch when the world dimension does not fit the mode.
void check_render_mode(std::size_t dim, RenderMode mode);

// One frame for one sample; `token` selects the mixture drawn under a scatter.
std::string render_frame(std::span<const double> sample, const World& world, RenderMode mode,
                         const std::string& token);

// Frames side by side, one per step.
std::string render_sequence(std::span<const std::vector<double>> samples, const World& world,
                            RenderMode mode, std::span<const std::string> tokens);

// Hex colour for a value on the heatmap scale.
std::string heat_colour(double value);

}  // namespace beamlat
