#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mockforge/core.hpp"

namespace mockforge::render {

struct Theme {
  std::string background = "#ffffff";
  std::string frame = "#bdc1c6";
  std::string stroke = "#5f6368";
  std::string fill = "#e8eaed";
  std::string accent = "#1a73e8";
  std::string on_accent = "#ffffff";
};

struct RenderOptions {
  double width = 360.0;
  double height = 640.0;
  Theme theme;
  bool annotate_classes = false;  // small class-name label in each box
};

struct SvgDocument {
  std::string svg;
  std::vector<std::string> warnings;  // classes drawn as placeholders or skipped
};

/// One <g> per element in canonical order. Each group carries its box in canvas
/// units as data-x/data-y/data-w/data-h, and every shape stays inside the box.
SvgDocument render_svg(const MockupCandidate& candidate, const ClassVocabulary& vocab, const RenderOptions& opt = {});

/// True when the class name has a dedicated template (UNKNOWN and SEPARATOR included).
bool has_template(std::string_view class_name);

struct GalleryOptions {
  RenderOptions render{.width = 180.0, .height = 320.0, .theme = {}, .annotate_classes = false};
  std::size_t columns = 5;
  std::optional<std::uint64_t> scramble_seed;  // shuffle cells; the seed is written into the page
  std::string title = "Mock-ups";
};

/// Self-contained HTML grid. Cells are grouped text-only, multi-modal, generator
/// (input order within a method) unless scrambled. Throws UsageError when empty.
std::string render_gallery(std::span<const MockupCandidate> candidates, const ClassVocabulary& vocab,
                           const std::string& prompt, const GalleryOptions& opt = {});

std::string xml_escape(std::string_view s);

}  // namespace mockforge::render
