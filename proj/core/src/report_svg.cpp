#include <algorithm>
#include <cmath>
#include <map>

#include "cotscope/pipeline.hpp"
#include "io.hpp"

namespace cotscope {

namespace {

std::string xml_escape(std::string_view s) {
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

std::string hex_color(int r, int g, int b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

// White to saturated blue (negative) or red (positive).
std::string effect_color(double effect, double scale) {
  const double t = std::clamp(std::abs(effect) / scale, 0.0, 1.0);
  auto mix = [t](int from, int to) { return static_cast<int>(std::lround(from + (to - from) * t)); };
  if (effect < 0) return hex_color(mix(255, 33), mix(255, 102), mix(255, 172));
  return hex_color(mix(255, 178), mix(255, 24), mix(255, 43));
}

}  // namespace

std::string render_heatmap_svg(const std::string& title, const std::vector<std::string>& models,
                               const std::vector<std::string>& metrics, const std::vector<HeatmapCell>& cells,
                               double effect_scale) {
  constexpr int cell_w = 96, cell_h = 30, left = 220, top = 70;
  const int width = left + cell_w * static_cast<int>(models.size()) + 20;
  const int height = top + cell_h * static_cast<int>(metrics.size()) + 20;
  std::map<std::pair<std::string, std::string>, const HeatmapCell*> lookup;
  for (const auto& c : cells) lookup[{c.model, c.metric}] = &c;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"10\" y=\"22\" font-size=\"15\">" + xml_escape(title) + "</text>\n";
  for (std::size_t c = 0; c < models.size(); ++c) {
    const int x = left + cell_w * static_cast<int>(c) + cell_w / 2;
    out += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 10) +
           "\" text-anchor=\"middle\">" + xml_escape(models[c]) + "</text>\n";
  }
  for (std::size_t r = 0; r < metrics.size(); ++r) {
    const int y = top + cell_h * static_cast<int>(r);
    out += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" + std::to_string(y + cell_h / 2 + 4) +
           "\" text-anchor=\"end\">" + xml_escape(metrics[r]) + "</text>\n";
    for (std::size_t c = 0; c < models.size(); ++c) {
      const int x = left + cell_w * static_cast<int>(c);
      auto it = lookup.find({models[c], metrics[r]});
      const HeatmapCell* cell = it == lookup.end() ? nullptr : it->second;
      const bool significant = cell && cell->effect && cell->stars != Stars::NS;
      const std::string fill = significant ? effect_color(*cell->effect, effect_scale) : "#d9d9d9";
      const std::string cls = !cell || !cell->effect ? "na" : (significant ? "sig" : "ns");
      out += "<rect class=\"" + cls + "\" x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell_w) + "\" height=\"" + std::to_string(cell_h) + "\" fill=\"" + fill +
             "\" stroke=\"#ffffff\"/>\n";
      std::string label = "n/a";
      if (cell && cell->effect) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", *cell->effect);
        label = buf;
        if (significant) label += " " + std::string(to_string(cell->stars));
      }
      std::string ink = "#777777";
      if (significant) ink = std::abs(*cell->effect) > 0.6 * effect_scale ? "#ffffff" : "#000000";
      out += "<text x=\"" + std::to_string(x + cell_w / 2) + "\" y=\"" + std::to_string(y + cell_h / 2 + 4) +
             "\" text-anchor=\"middle\" fill=\"" + ink + "\">" + xml_escape(label) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cotscope
