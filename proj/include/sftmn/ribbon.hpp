#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sftmn/featureio.hpp"

namespace sftmn {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  std::string hex() const;  // "#rrggbb"
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Seven fixed colours, then golden-angle hues for larger class counts.
std::vector<Rgb> default_palette(std::size_t num_classes);

enum class RibbonFormat { Svg, Ppm, Csv };

RibbonFormat ribbon_format_from_string(const std::string& s);
std::string extension(RibbonFormat format);

struct RibbonRow {
  std::string name;
  std::vector<int> labels;
};

struct RibbonSpec {
  std::vector<RibbonRow> rows;
  std::vector<Rgb> palette;  // indexed by class
  ClassMapping mapping;      // class names for CSV output; may be empty
  RibbonFormat format = RibbonFormat::Svg;
  int band_height = 24;
};

/// One horizontal band per row, split into spans proportional to segment
/// lengths. SVG uses one user unit per frame, PPM scales frames to pixels,
/// CSV lists the segments (row, class, class_name, start, end).
std::string render_ribbon(const RibbonSpec& spec);
void render_ribbon(const RibbonSpec& spec, const std::filesystem::path& path);

}  // namespace sftmn
