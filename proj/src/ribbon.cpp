#include "sftmn/ribbon.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sftmn/errors.hpp"
#include "sftmn/metrics.hpp"

namespace sftmn {

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

namespace {

Rgb from_hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto byte = [m](double u) { return static_cast<std::uint8_t>(std::lround((u + m) * 255.0)); };
  return {byte(r), byte(g), byte(b)};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

void validate(const RibbonSpec& spec) {
  if (spec.rows.empty()) throw ValidationError("ribbon: no rows");
  const std::size_t T = spec.rows.front().labels.size();
  if (T == 0) throw ValidationError("ribbon: empty label rows");
  for (const auto& row : spec.rows) {
    if (row.labels.size() != T)
      throw ValidationError("ribbon: row '" + row.name + "' has " + std::to_string(row.labels.size()) +
                            " frames, expected " + std::to_string(T));
    for (int l : row.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= spec.palette.size())
        throw ValidationError("ribbon: palette has no colour for class " + std::to_string(l));
  }
  if (spec.band_height < 1) throw ValidationError("ribbon: band height must be positive");
}

std::string render_svg(const RibbonSpec& spec) {
  const std::size_t T = spec.rows.front().labels.size();
  const int h = spec.band_height;
  const int gap = h / 4;
  const std::size_t height = spec.rows.size() * static_cast<std::size_t>(h + gap);
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + std::to_string(T) +
                    " " + std::to_string(height) + "\" width=\"1000\" height=\"" +
                    std::to_string(height) + "\" preserveAspectRatio=\"none\">\n";
  for (std::size_t r = 0; r < spec.rows.size(); ++r) {
    const auto& row = spec.rows[r];
    const std::size_t y = r * static_cast<std::size_t>(h + gap);
    out += "  <g id=\"" + xml_escape(row.name) + "\">\n";
    for (const auto& seg : labels_to_segments(row.labels)) {
      out += "    <rect x=\"" + std::to_string(seg.start) + "\" y=\"" + std::to_string(y) +
             "\" width=\"" + std::to_string(seg.length()) + "\" height=\"" + std::to_string(h) +
             "\" fill=\"" + spec.palette[static_cast<std::size_t>(seg.label)].hex() +
             "\" data-class=\"" + std::to_string(seg.label) + "\"/>\n";
    }
    out += "  </g>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string render_ppm(const RibbonSpec& spec) {
  const std::size_t T = spec.rows.front().labels.size();
  const std::size_t scale = T >= 600 ? 1 : (600 + T - 1) / T;
  const std::size_t width = T * scale;
  const std::size_t h = static_cast<std::size_t>(spec.band_height);
  const std::size_t gap = h / 4;
  const std::size_t height = spec.rows.size() * (h + gap);
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + width * height * 3, static_cast<char>(255));
  for (std::size_t r = 0; r < spec.rows.size(); ++r) {
    const auto& labels = spec.rows[r].labels;
    for (std::size_t y = r * (h + gap); y < r * (h + gap) + h; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const Rgb c = spec.palette[static_cast<std::size_t>(labels[x / scale])];
        char* px = out.data() + header + (y * width + x) * 3;
        px[0] = static_cast<char>(c.r);
        px[1] = static_cast<char>(c.g);
        px[2] = static_cast<char>(c.b);
      }
    }
  }
  return out;
}

std::string render_csv(const RibbonSpec& spec) {
  std::string out = "row,class,class_name,start,end\n";
  for (const auto& row : spec.rows) {
    for (const auto& seg : labels_to_segments(row.labels)) {
      const std::string name = static_cast<std::size_t>(seg.label) < spec.mapping.size()
                                   ? spec.mapping.name(seg.label)
                                   : std::string{};
      out += csv_field(row.name) + "," + std::to_string(seg.label) + "," + csv_field(name) + "," +
             std::to_string(seg.start) + "," + std::to_string(seg.end) + "\n";
    }
  }
  return out;
}

}  // namespace

std::vector<Rgb> default_palette(std::size_t num_classes) {
  static const Rgb fixed[] = {{0x1f, 0x77, 0xb4}, {0xff, 0x7f, 0x0e}, {0x2c, 0xa0, 0x2c},
                              {0xd6, 0x27, 0x28}, {0x94, 0x67, 0xbd}, {0x8c, 0x56, 0x4b},
                              {0xe3, 0x77, 0xc2}};
  std::vector<Rgb> palette;
  for (std::size_t i = 0; i < num_classes; ++i) {
    if (num_classes <= 7) {
      palette.push_back(fixed[i]);
    } else {
      palette.push_back(from_hsv(std::fmod(static_cast<double>(i) * 137.50776405003785, 360.0), 0.65, 0.9));
    }
  }
  return palette;
}

RibbonFormat ribbon_format_from_string(const std::string& s) {
  if (s == "svg") return RibbonFormat::Svg;
  if (s == "ppm") return RibbonFormat::Ppm;
  if (s == "csv") return RibbonFormat::Csv;
  throw ParseError("ribbon format must be svg, ppm or csv, got '" + s + "'");
}

std::string extension(RibbonFormat format) {
  switch (format) {
    case RibbonFormat::Svg: return ".svg";
    case RibbonFormat::Ppm: return ".ppm";
    case RibbonFormat::Csv: return ".csv";
  }
  return "";
}

std::string render_ribbon(const RibbonSpec& spec) {
  validate(spec);
  switch (spec.format) {
    case RibbonFormat::Svg: return render_svg(spec);
    case RibbonFormat::Ppm: return render_ppm(spec);
    case RibbonFormat::Csv: return render_csv(spec);
  }
  return {};
}

void render_ribbon(const RibbonSpec& spec, const std::filesystem::path& path) {
  const std::string bytes = render_ribbon(spec);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace sftmn
