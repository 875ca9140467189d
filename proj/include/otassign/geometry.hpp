#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace otassign {

enum class Units { normalized, absolute };

std::string_view to_string(Units u);
Units units_from_string(std::string_view s);

/// Center/size parameterization of a box.
struct CxCyWh {
  double cx = 0, cy = 0, w = 0, h = 0;
};

/// Axis-aligned box stored as corners. Degenerate (zero-area) boxes are valid.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  static Box from_cxcywh(const CxCyWh& c);
  CxCyWh to_cxcywh() const;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;
  Box translated(double dx, double dy) const { return {x1 + dx, y1 + dy, x2 + dx, y2 + dy}; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct BoxList {
  std::vector<Box> boxes;
  Units units = Units::absolute;

  std::size_t size() const { return boxes.size(); }
  bool empty() const { return boxes.empty(); }
  const Box& operator[](std::size_t i) const { return boxes[i]; }
};

/// Throws std::invalid_argument when a box has x1 > x2 or y1 > y2 or a
/// non-finite coordinate.
void validate(const Box& b);
void validate(const BoxList& list);

/// Intersection over union. Zero-area boxes have IoU 0 with everything.
double iou(const Box& a, const Box& b);

/// Generalized IoU: iou - (hull - union) / hull, union and hull clamped at 1e-12.
double giou(const Box& a, const Box& b);

/// Sum of absolute differences of the cxcywh coordinates.
double l1_box_distance(const Box& a, const Box& b);
double l1_box_distance(const Box& a, Units ua, const Box& b, Units ub);

void require_same_units(Units a, Units b);

/// Greedy class-agnostic NMS. Returns retained indices by descending score
/// (ties keep the lower index first). A box is suppressed when its IoU with
/// a retained higher-scored box exceeds `threshold`.
std::vector<std::size_t> nms(const BoxList& boxes, std::span<const double> scores,
                             double threshold);

inline constexpr double kNmsThreshold = 0.7;

// JSON: a box is [x1, y1, x2, y2]; a list is {"boxes": [[...], ...], "units": "..."}.
nlohmann::json to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BoxList& list);
BoxList box_list_from_json(const nlohmann::json& j);

}  // namespace otassign
