#include "otassign/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace otassign {

namespace {
constexpr double kAreaFloor = 1e-12;
}

std::string_view to_string(Units u) {
  return u == Units::normalized ? "normalized" : "absolute";
}

Units units_from_string(std::string_view s) {
  if (s == "normalized") return Units::normalized;
  if (s == "absolute") return Units::absolute;
  throw std::invalid_argument("units: expected \"normalized\" or \"absolute\", got \"" +
                              std::string(s) + "\"");
}

Box Box::from_cxcywh(const CxCyWh& c) {
  return {c.cx - 0.5 * c.w, c.cy - 0.5 * c.h, c.cx + 0.5 * c.w, c.cy + 0.5 * c.h};
}

CxCyWh Box::to_cxcywh() const {
  return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
}

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 <= x2 && y1 <= y2;
}

void validate(const Box& b) {
  if (!b.valid()) {
    throw std::invalid_argument("invalid box [" + std::to_string(b.x1) + ", " +
                                std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
                                std::to_string(b.y2) + "]");
  }
}

void validate(const BoxList& list) {
  for (const auto& b : list.boxes) validate(b);
}

namespace {

double intersection(const Box& a, const Box& b) {
  const double w = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double h = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  return w * h;
}

double hull_area(const Box& a, const Box& b) {
  return (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
         (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = intersection(a, b);
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const Box& a, const Box& b) {
  const double inter = intersection(a, b);
  const double uni = std::max(a.area() + b.area() - inter, kAreaFloor);
  const double hull = std::max(hull_area(a, b), kAreaFloor);
  return iou(a, b) - (hull - uni) / hull;
}

double l1_box_distance(const Box& a, const Box& b) {
  const CxCyWh p = a.to_cxcywh();
  const CxCyWh q = b.to_cxcywh();
  return std::abs(p.cx - q.cx) + std::abs(p.cy - q.cy) + std::abs(p.w - q.w) +
         std::abs(p.h - q.h);
}

void require_same_units(Units a, Units b) {
  if (a != b) {
    throw std::invalid_argument("box units mismatch: " + std::string(to_string(a)) + " vs " +
                                std::string(to_string(b)));
  }
}

double l1_box_distance(const Box& a, Units ua, const Box& b, Units ub) {
  require_same_units(ua, ub);
  return l1_box_distance(a, b);
}

std::vector<std::size_t> nms(const BoxList& boxes, std::span<const double> scores,
                             double threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: " + std::to_string(boxes.size()) + " boxes but " +
                                std::to_string(scores.size()) + " scores");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("nms: threshold must lie in (0, 1]");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(keep.begin(), keep.end(), [&](std::size_t k) {
      return iou(boxes[k], boxes[idx]) > threshold;
    });
    if (!suppressed) keep.push_back(idx);
  }
  return keep;
}

nlohmann::json to_json(const Box& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("box: expected an array of 4 numbers");
  }
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("box: expected an array of 4 numbers");
  }
  Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  validate(b);
  return b;
}

nlohmann::json to_json(const BoxList& list) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : list.boxes) arr.push_back(to_json(b));
  return {{"boxes", std::move(arr)}, {"units", std::string(to_string(list.units))}};
}

BoxList box_list_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("boxes") || !j.contains("units")) {
    throw std::invalid_argument("box list: expected {\"boxes\": [...], \"units\": ...}");
  }
  BoxList out;
  out.units = units_from_string(j.at("units").get<std::string>());
  for (const auto& b : j.at("boxes")) out.boxes.push_back(box_from_json(b));
  return out;
}

}  // namespace otassign
