#include "mockforge/render.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <random>

#include <fmt/format.h>

namespace mockforge::render {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

struct Box {
  double x, y, w, h;
  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }
  double side() const { return std::min(w, h); }
  // Shrinks by d on every side, never below a point.
  Box inset(double d) const {
    const double dx = std::min(d, w / 2), dy = std::min(d, h / 2);
    return {x + dx, y + dy, w - 2 * dx, h - 2 * dy};
  }
  // Centered square of the given side, clipped to the box.
  Box square(double s) const {
    s = std::min({s, w, h});
    return {cx() - s / 2, cy() - s / 2, s, s};
  }
};

constexpr double kStroke = 1.0;

std::string num(double v) { return fmt::format("{:.2f}", v); }

class Pen {
 public:
  Pen(std::string& out, const Theme& theme) : out_(out), theme_(theme) {}
  const Theme& theme() const { return theme_; }

  void rect(Box b, const std::string& fill, const std::string& stroke, double rx = 0.0, bool dashed = false) {
    const double sw = std::min(kStroke, b.side() / 2);  // hairline boxes get hairline strokes
    if (!stroke.empty()) b = b.inset(sw / 2);
    rx = std::min(rx, b.side() / 2);
    out_ += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"", num(b.x), num(b.y), num(b.w), num(b.h));
    if (rx > 0) out_ += fmt::format(" rx=\"{}\"", num(rx));
    out_ += fmt::format(" fill=\"{}\"", fill.empty() ? "none" : fill);
    if (!stroke.empty()) out_ += fmt::format(" stroke=\"{}\" stroke-width=\"{}\"", stroke, num(sw));
    if (dashed) out_ += " stroke-dasharray=\"4 3\"";
    out_ += "/>";
  }
  void circle(double cx, double cy, double r, const std::string& fill, const std::string& stroke) {
    const double sw = std::min(kStroke, r);
    if (!stroke.empty()) r -= sw / 2;
    out_ += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"", num(cx), num(cy), num(r),
                        fill.empty() ? "none" : fill);
    if (!stroke.empty()) out_ += fmt::format(" stroke=\"{}\" stroke-width=\"{}\"", stroke, num(sw));
    out_ += "/>";
  }
  // Horizontal or vertical strokes stay inside the box by construction of the callers.
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = kStroke) {
    out_ += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"/>", num(x1),
                        num(y1), num(x2), num(y2), stroke, num(width));
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill) {
    std::string p;
    for (const auto& [x, y] : pts) p += (p.empty() ? "" : " ") + num(x) + "," + num(y);
    out_ += fmt::format("<polygon points=\"{}\" fill=\"{}\"/>", p, fill);
  }
  // Placeholder text: gray bars, one per line that fits.
  void text_lines(Box b, std::size_t max_lines = 3) {
    const double line_h = std::clamp(b.h / 4, 2.0, 8.0);
    const double gap = line_h * 0.8;
    std::size_t lines = std::clamp<std::size_t>(static_cast<std::size_t>((b.h + gap) / (line_h + gap)), 1, max_lines);
    const double total = static_cast<double>(lines) * line_h + static_cast<double>(lines - 1) * gap;
    double y = b.cy() - std::min(total, b.h) / 2;
    for (std::size_t i = 0; i < lines; ++i) {
      const double w = b.w * (i + 1 == lines && lines > 1 ? 0.6 : 0.9);
      rect({b.x, y, w, std::min(line_h, b.h)}, theme_.fill, "", line_h / 2);
      y += line_h + gap;
    }
  }

 private:
  std::string& out_;
  const Theme& theme_;
};

using Template = std::function<void(Pen&, const Box&)>;

const std::map<std::string, Template, std::less<>>& templates() {
  static const std::map<std::string, Template, std::less<>> t = [] {
    std::map<std::string, Template, std::less<>> m;
    auto image = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().fill, p.theme().stroke);
      const Box g = b.square(b.side() * 0.6);
      p.polygon({{g.x, g.y + g.h}, {g.x + g.w * 0.4, g.y + g.h * 0.35}, {g.x + g.w * 0.65, g.y + g.h * 0.7},
                 {g.x + g.w * 0.8, g.y + g.h * 0.5}, {g.x + g.w, g.y + g.h}},
                p.theme().stroke);
      p.circle(g.x + g.w * 0.8, g.y + g.h * 0.2, g.w * 0.1, p.theme().stroke, "");
    };
    m["Image"] = image;
    m["Background Image"] = [image](Pen& p, const Box& b) {
      p.rect(b, "#f1f3f4", "");
      image(p, b.inset(b.side() * 0.1));
    };
    m["Advertisement"] = [](Pen& p, const Box& b) {
      p.rect(b, "#fef7e0", "#f9ab00");
      const Box badge{b.x + 2, b.y + 2, std::min(b.w - 4, 18.0), std::min(b.h - 4, 10.0)};
      if (badge.w > 0 && badge.h > 0) p.rect(badge, "#f9ab00", "");
    };
    m["Icon"] = [](Pen& p, const Box& b) { p.circle(b.cx(), b.cy(), b.side() / 2, p.theme().fill, p.theme().stroke); };
    m["Text"] = [](Pen& p, const Box& b) { p.text_lines(b, 6); };
    m["Text Button"] = [](Pen& p, const Box& b) {
      p.rect(b, "", p.theme().accent, b.h / 4);
      p.text_lines(Box{b.x + b.w * 0.25, b.y, b.w * 0.5, b.h}.inset(b.h * 0.3), 1);
    };
    m["Toolbar"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().accent, "");
      const double s = std::min(b.h * 0.5, 20.0);
      const Box menu{b.x + s * 0.5, b.cy() - s / 2, std::min(s, b.w / 4), s};
      if (menu.x + menu.w > b.x + b.w) return;
      for (int i = 0; i < 3; ++i) {
        const double y = menu.y + menu.h * (0.2 + 0.3 * i);
        p.line(menu.x, y, menu.x + menu.w, y, p.theme().on_accent, std::max(0.5, s / 10));
      }
      const double tx = menu.x + menu.w + s;
      if (tx < b.x + b.w * 0.8) {
        p.rect({tx, b.cy() - s * 0.2, (b.x + b.w * 0.8) - tx, s * 0.4}, p.theme().on_accent, "", s * 0.2);
      }
    };
    m["List Item"] = [](Pen& p, const Box& b) {
      p.line(b.x, b.y + b.h - 0.5, b.x + b.w, b.y + b.h - 0.5, p.theme().fill);
      const double r = std::min(b.h * 0.35, b.w * 0.15);
      const double pad = std::min(b.h * 0.15, b.w * 0.1);
      p.circle(b.x + r + pad, b.cy(), r, p.theme().fill, "");
      const double tx = b.x + 2 * r + 2 * pad;
      if (tx < b.x + b.w) p.text_lines(Box{tx, b.y, b.x + b.w - tx, b.h}.inset(b.h * 0.2), 2);
    };
    m["Card"] = [](Pen& p, const Box& b) { p.rect(b, p.theme().background, p.theme().stroke, 6); };
    m["Modal"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, p.theme().stroke, 8);
      p.text_lines(Box{b.x, b.y, b.w, b.h * 0.3}.inset(b.side() * 0.08), 1);
      const Box btn{b.x + b.w * 0.6, b.y + b.h * 0.75, b.w * 0.3, b.h * 0.15};
      p.rect(btn, p.theme().accent, "", btn.h / 3);
    };
    m["Drawer"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, p.theme().stroke);
      const double step = std::max(12.0, b.h / 8);
      for (double y = b.y + step; y + 4 < b.y + b.h; y += step) {
        p.rect({b.x + b.w * 0.1, y, b.w * 0.6, std::min(4.0, step / 3)}, p.theme().fill, "", 2);
      }
    };
    m["Input"] = [](Pen& p, const Box& b) {
      p.rect(b, "#f8f9fa", "");
      p.line(b.x, b.y + b.h - 0.5, b.x + b.w, b.y + b.h - 0.5, p.theme().stroke);
      p.text_lines(Box{b.x + std::min(4.0, b.w * 0.1), b.y, b.w * 0.5, b.h}.inset(b.h * 0.3), 1);
    };
    m["Checkbox"] = [](Pen& p, const Box& b) {
      const double s = std::min(b.h, 18.0);
      p.rect({b.x, b.cy() - s / 2, std::min(s, b.w), s}, "", p.theme().stroke, 2);
      const double tx = b.x + s * 1.5;
      if (tx < b.x + b.w) p.text_lines(Box{tx, b.y, b.x + b.w - tx, b.h}.inset(b.h * 0.25), 1);
    };
    m["Radio Button"] = [](Pen& p, const Box& b) {
      const double r = std::min(b.h, 18.0) / 2;
      const double cx = b.x + std::min(r, b.w / 2);
      p.circle(cx, b.cy(), std::min(r, b.w / 2), "", p.theme().stroke);
      p.circle(cx, b.cy(), std::min(r, b.w / 2) * 0.45, p.theme().accent, "");
      const double tx = b.x + r * 3;
      if (tx < b.x + b.w) p.text_lines(Box{tx, b.y, b.x + b.w - tx, b.h}.inset(b.h * 0.25), 1);
    };
    m["On/Off Switch"] = [](Pen& p, const Box& b) {
      // Track keeps a 2:1 aspect; only its position stretches.
      const double th = std::min(b.h * 0.6, b.w / 2);
      const Box track{b.x + b.w - 2 * th, b.cy() - th / 2, 2 * th, th};
      p.rect(track, "#aecbfa", "", th / 2);
      p.circle(track.x + track.w - th / 2, track.cy(), th / 2, p.theme().accent, "");
    };
    m["Slider"] = [](Pen& p, const Box& b) {
      const double r = std::min({b.h / 2, 8.0, b.w / 2});
      p.line(b.x + r, b.cy(), b.x + b.w - r, b.cy(), p.theme().fill, std::min(3.0, b.h));
      p.line(b.x + r, b.cy(), b.x + r + (b.w - 2 * r) * 0.4, b.cy(), p.theme().accent, std::min(3.0, b.h));
      p.circle(b.x + r + (b.w - 2 * r) * 0.4, b.cy(), r, p.theme().accent, "");
    };
    m["Number Stepper"] = [](Pen& p, const Box& b) {
      p.rect(b, "", p.theme().stroke, 3);
      const double s = std::min(b.h, b.w / 3);
      const double lw = std::min(kStroke, s * 0.2);
      p.line(b.x + s * 0.3, b.cy(), b.x + s * 0.7, b.cy(), p.theme().stroke, lw);
      const double px = b.x + b.w - s / 2;
      p.line(px - s * 0.2, b.cy(), px + s * 0.2, b.cy(), p.theme().stroke, lw);
      p.line(px, b.cy() - s * 0.2, px, b.cy() + s * 0.2, p.theme().stroke, lw);
    };
    m["Pager Indicator"] = [](Pen& p, const Box& b) {
      const double r = std::min({b.h / 2, 4.0, b.w / 2});
      const int n = std::clamp(static_cast<int>(b.w / (4 * r)), 1, 5);
      const double start = b.cx() - (n - 1) * 2 * r;
      for (int i = 0; i < n; ++i) p.circle(start + i * 4 * r, b.cy(), r, i == 0 ? p.theme().accent : p.theme().fill, "");
    };
    m["Multi-Tab"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, "");
      const int tabs = std::clamp(static_cast<int>(b.w / 60), 2, 5);
      const double tw = b.w / tabs;
      for (int i = 0; i < tabs; ++i) {
        p.text_lines(Box{b.x + i * tw, b.y, tw, b.h}.inset(std::min(tw, b.h) * 0.3), 1);
      }
      p.rect({b.x, b.y + b.h - std::min(3.0, b.h), tw, std::min(3.0, b.h)}, p.theme().accent, "");
    };
    m["Bottom Navigation"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, "");
      p.line(b.x, b.y + 0.5, b.x + b.w, b.y + 0.5, p.theme().fill);
      const int n = 4;
      const double r = std::min({b.h * 0.25, b.w / (3.0 * n), 10.0});
      for (int i = 0; i < n; ++i) {
        p.circle(b.x + b.w * (i + 0.5) / n, b.cy(), r, i == 0 ? p.theme().accent : p.theme().fill, "");
      }
    };
    m["Button Bar"] = [](Pen& p, const Box& b) {
      const double bw = b.w / 2;
      for (int i = 0; i < 2; ++i) {
        p.rect(Box{b.x + i * bw, b.y, bw, b.h}.inset(std::min(bw, b.h) * 0.1), i ? p.theme().accent : "",
               i ? "" : p.theme().accent, b.h / 4);
      }
    };
    m["Date Picker"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, p.theme().stroke, 4);
      const Box g = b.inset(b.side() * 0.1);
      const double cw = g.w / 7, ch = g.h / 6;
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 7; ++c) {
          const Box cell = Box{g.x + c * cw, g.y + r * ch, cw, ch}.inset(std::min(cw, ch) * 0.2);
          p.rect(cell, r == 2 && c == 3 ? p.theme().accent : p.theme().fill, "", cell.side() / 2);
        }
    };
    m["Map View"] = [](Pen& p, const Box& b) {
      p.rect(b, "#e6f4ea", p.theme().stroke);
      p.line(b.x, b.y + b.h * 0.6, b.x + b.w, b.y + b.h * 0.6, "#ffffff", std::min(4.0, b.h / 4));
      p.line(b.x + b.w * 0.35, b.y, b.x + b.w * 0.35, b.y + b.h, "#ffffff", std::min(4.0, b.w / 4));
      const double r = std::min(b.side() * 0.12, 10.0);
      p.circle(b.cx(), b.cy() - r / 2, r, "#d93025", "");
    };
    m["Video"] = [](Pen& p, const Box& b) {
      p.rect(b, "#202124", "");
      const Box t = b.square(std::min(b.side() * 0.4, 40.0));
      p.polygon({{t.x, t.y}, {t.x + t.w, t.cy()}, {t.x, t.y + t.h}}, "#ffffff");
    };
    m["Web View"] = [](Pen& p, const Box& b) {
      p.rect(b, p.theme().background, p.theme().stroke);
      const double bar = std::min(b.h * 0.15, 16.0);
      p.rect({b.x, b.y, b.w, bar}, p.theme().fill, "");
      p.text_lines(Box{b.x, b.y + bar, b.w, b.h - bar}.inset(b.side() * 0.1), 6);
    };
    m["SEPARATOR"] = [](Pen& p, const Box& b) {
      p.line(b.x, b.cy(), b.x + b.w, b.cy(), p.theme().frame, std::min(kStroke, b.h));
    };
    m["UNKNOWN"] = [](Pen& p, const Box& b) { p.rect(b, "", p.theme().stroke, 0, true); };
    return m;
  }();
  return t;
}

}  // namespace

bool has_template(std::string_view class_name) { return templates().contains(class_name); }

SvgDocument render_svg(const MockupCandidate& candidate, const ClassVocabulary& vocab, const RenderOptions& opt) {
  if (!(opt.width > 0) || !(opt.height > 0)) throw UsageError("canvas size must be positive");
  SvgDocument doc;
  std::string& s = doc.svg;
  s += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">",
      num(opt.width), num(opt.height));
  Pen pen(s, opt.theme);
  pen.rect({0, 0, opt.width, opt.height}, opt.theme.background, opt.theme.frame);

  const auto elements = canonical_sort(candidate.elements);
  for (const auto& e : elements) {
    if (!box_is_valid(e)) throw DataError("cannot render an element with invalid geometry");
    const std::string name = vocab.contains(e.class_id) ? vocab.at(e.class_id).name : "#" + std::to_string(e.class_id);
    if (vocab.contains(e.class_id) && vocab.is_control(e.class_id)) {
      doc.warnings.push_back("skipped control token " + name);
      continue;
    }
    const Box b{e.x * opt.width, e.y * opt.height, std::min(e.w * opt.width, opt.width - e.x * opt.width),
                std::min(e.h * opt.height, opt.height - e.y * opt.height)};
    s += fmt::format("<g class=\"element\" data-class=\"{}\" data-x=\"{}\" data-y=\"{}\" data-w=\"{}\" data-h=\"{}\">",
                     xml_escape(name), num(b.x), num(b.y), num(b.w), num(b.h));
    const auto it = templates().find(name);
    if (it != templates().end()) {
      it->second(pen, b);
    } else {
      doc.warnings.push_back("no template for class " + name);
      templates().at("UNKNOWN")(pen, b);
    }
    if (opt.annotate_classes) {
      s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"8\" fill=\"#d93025\">{}</text>",
                       num(b.x + 1), num(b.y + std::min(8.0, b.h)), xml_escape(name));
    }
    s += "</g>";
  }
  s += "</svg>\n";
  return doc;
}

std::string render_gallery(std::span<const MockupCandidate> candidates, const ClassVocabulary& vocab,
                           const std::string& prompt, const GalleryOptions& opt) {
  if (candidates.empty()) throw UsageError("gallery needs at least one candidate");
  if (opt.columns == 0) throw UsageError("gallery needs at least one column");
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rank = [](Method m) {
    switch (m) {
      case Method::text_only: return 0;
      case Method::multi_modal: return 1;
      case Method::generator: return 2;
    }
    return 3;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rank(candidates[a].method) < rank(candidates[b].method); });
  if (opt.scramble_seed) {
    std::mt19937_64 rng(*opt.scramble_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::string html = "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">";
  html += fmt::format("<title>{}</title>", xml_escape(opt.title));
  if (opt.scramble_seed) html += fmt::format("<meta name=\"scramble-seed\" content=\"{}\">", *opt.scramble_seed);
  html += fmt::format(
      "<style>body{{font-family:sans-serif;margin:16px}}.grid{{display:grid;grid-template-columns:repeat({},auto);"
      "gap:12px;justify-content:start}}figure{{margin:0}}figcaption{{font-size:12px;color:#5f6368}}</style>",
      std::min(opt.columns, candidates.size()));
  html += "</head><body>";
  html += fmt::format("<h1>{}</h1><p class=\"prompt\">{}</p><div class=\"grid\">", xml_escape(opt.title),
                      xml_escape(prompt));
  for (std::size_t cell = 0; cell < order.size(); ++cell) {
    const auto& c = candidates[order[cell]];
    std::string caption{to_string(c.method)};
    if (c.source_screen_id) caption += " · screen " + *c.source_screen_id;
    if (c.seed) caption += " · seed " + std::to_string(*c.seed);
    html += fmt::format("<figure class=\"cell\" data-method=\"{}\">", to_string(c.method));
    html += render_svg(c, vocab, opt.render).svg;
    html += fmt::format("<figcaption>{}. {}</figcaption></figure>", cell + 1, xml_escape(caption));
  }
  html += "</div></body></html>\n";
  return html;
}

}  // namespace mockforge::render
