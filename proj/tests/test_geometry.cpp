#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "otassign/geometry.hpp"

using namespace otassign;

TEST_CASE("iou hand values") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  // intersection 2, union 6
  CHECK(iou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou of zero-area boxes is zero") {
  CHECK(iou({1, 1, 1, 1}, {1, 1, 1, 1}) == 0.0);
  CHECK(iou({0, 0, 0, 5}, {0, 0, 2, 2}) == 0.0);
  CHECK(std::isfinite(giou({1, 1, 1, 1}, {1, 1, 1, 1})));
  CHECK(std::isfinite(giou({1, 1, 1, 1}, {4, 4, 4, 4})));
}

TEST_CASE("giou hand values") {
  CHECK(giou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  // touching: hull equals union, iou 0
  CHECK(giou({0, 0, 1, 1}, {1, 0, 2, 1}) == doctest::Approx(0.0));
  // union 2, hull 100
  const double far = giou({0, 0, 1, 1}, {9, 9, 10, 10});
  CHECK(far < 0.0);
  CHECK(far == doctest::Approx(0.0 - 98.0 / 100.0).epsilon(1e-12));
  // hull == union -> giou == iou
  CHECK(giou({0, 0, 2, 2}, {1, 0, 3, 2}) == doctest::Approx(iou({0, 0, 2, 2}, {1, 0, 3, 2})));
}

TEST_CASE("l1 distance uses cxcywh") {
  CHECK(l1_box_distance({0, 0, 2, 2}, {0, 0, 2, 2}) == 0.0);
  // (1,1,2,2) vs (2,1,4,2)
  CHECK(l1_box_distance({0, 0, 2, 2}, {0, 0, 4, 2}) == doctest::Approx(3.0));
  CHECK(l1_box_distance({0, 0, 4, 2}, {0, 0, 2, 2}) == l1_box_distance({0, 0, 2, 2}, {0, 0, 4, 2}));
  CHECK_THROWS_AS(l1_box_distance({0, 0, 1, 1}, Units::absolute, {0, 0, 1, 1}, Units::normalized),
                  std::invalid_argument);
}

TEST_CASE("cxcywh round trip") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Box b = oracle::random_box(rng, 100.0);
    const CxCyWh c = b.to_cxcywh();
    const CxCyWh c2 = Box::from_cxcywh(c).to_cxcywh();
    CHECK(std::abs(c.cx - c2.cx) < 1e-9);
    CHECK(std::abs(c.cy - c2.cy) < 1e-9);
    CHECK(std::abs(c.w - c2.w) < 1e-9);
    CHECK(std::abs(c.h - c2.h) < 1e-9);
  }
}

TEST_CASE("box validation") {
  CHECK_NOTHROW(validate(Box{0, 0, 0, 0}));
  CHECK_THROWS_AS(validate(Box{1, 0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(Box{0, 0, NAN, 1}), std::invalid_argument);
}

TEST_CASE("nms examples") {
  BoxList one{{{0, 0, 1, 1}}, Units::absolute};
  const std::vector<double> s1{0.5};
  CHECK(nms(one, s1, 0.7) == std::vector<std::size_t>{0});

  BoxList twins{{{0, 0, 1, 1}, {0, 0, 1, 1}}, Units::absolute};
  const std::vector<double> s2{0.8, 0.9};
  CHECK(nms(twins, s2, 0.7) == std::vector<std::size_t>{1});

  // iou(a,b) = 0.8, c barely touches both
  BoxList three{{{0, 0, 10, 10}, {0, 0, 10, 8}, {9, 0, 19, 10}}, Units::absolute};
  const std::vector<double> s3{0.9, 0.8, 0.7};
  REQUIRE(iou(three[0], three[1]) == doctest::Approx(0.8));
  CHECK(nms(three, s3, 0.7) == std::vector<std::size_t>{0, 2});

  CHECK_THROWS_AS(nms(three, s1, 0.7), std::invalid_argument);
  CHECK_THROWS_AS(nms(three, s3, 0.0), std::invalid_argument);
}

TEST_CASE("nms retained-pair property and idempotence") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int scene = 0; scene < 200; ++scene) {
    BoxList boxes;
    std::vector<double> scores;
    for (int i = 0; i < 15; ++i) {
      boxes.boxes.push_back(oracle::random_box(rng, 50.0));
      scores.push_back(u(rng));
    }
    const auto keep = nms(boxes, scores, kNmsThreshold);
    std::set<std::size_t> kept(keep.begin(), keep.end());
    for (std::size_t a = 0; a < keep.size(); ++a) {
      if (a > 0) CHECK(scores[keep[a - 1]] >= scores[keep[a]]);
      for (std::size_t b = a + 1; b < keep.size(); ++b) {
        CHECK(iou(boxes[keep[a]], boxes[keep[b]]) <= kNmsThreshold);
      }
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (kept.count(i)) continue;
      bool covered = false;
      for (std::size_t k : keep) {
        covered = covered || (scores[k] >= scores[i] && iou(boxes[k], boxes[i]) > kNmsThreshold);
      }
      CHECK(covered);
    }
    BoxList sub;
    std::vector<double> sub_scores;
    for (std::size_t k : keep) {
      sub.boxes.push_back(boxes[k]);
      sub_scores.push_back(scores[k]);
    }
    const auto again = nms(sub, sub_scores, kNmsThreshold);
    CHECK(again.size() == keep.size());
  }
}

TEST_CASE("json encoding") {
  BoxList list{{{0, 1, 2, 3}, {4, 5, 6, 7}}, Units::normalized};
  const auto j = to_json(list);
  CHECK(j.dump() == R"({"boxes":[[0.0,1.0,2.0,3.0],[4.0,5.0,6.0,7.0]],"units":"normalized"})");
  const BoxList back = box_list_from_json(j);
  CHECK(back.units == Units::normalized);
  CHECK(back.boxes == list.boxes);
  CHECK_THROWS_AS(box_from_json(nlohmann::json::array({1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(box_from_json(nlohmann::json::array({3, 0, 1, 1})), std::invalid_argument);
  CHECK_THROWS_AS(units_from_string("pixels"), std::invalid_argument);
}
