#pragma once

#include <string>
#include <vector>

#include "mcm/tensor.hpp"

namespace mcm {

// One polyline. xs and ys must have equal length; non-finite points break
// the line instead of being interpolated over.
struct Series {
    std::string label;
    std::vector<double> xs, ys;
};

// Fixed-palette PNG line chart with axes, gridlines, tick labels, and a
// legend. Intended for loss curves and metric-vs-step charts; text is a
// built-in 5x7 bitmap font (lowercase, digits, and a few symbols).
void write_line_chart(const std::string& title, const std::vector<Series>& series,
                      const std::string& path, long width = 720, long height = 440);

// Tiles clips into one grayscale PNG: one row per clip, one column per
// frame, values mapped from [-1, 1] to [0, 255].
void write_frame_grid(const std::vector<Tensor>& clips, const std::string& path,
                      long max_clips = 8);

}  // namespace mcm
