#include <doctest.h>

#include <cmath>

#include "otassign/simulate.hpp"

using namespace otassign;
using namespace otassign::sim;

TEST_CASE("scene generation") {
  const Scene a = generate_scene(42, 5, 80);
  const Scene b = generate_scene(42, 5, 80);
  CHECK(a.gt.boxes.boxes == b.gt.boxes.boxes);
  CHECK(a.gt.labels == b.gt.labels);
  CHECK(generate_scene(43, 5, 80).gt.boxes.boxes != a.gt.boxes.boxes);
  CHECK(generate_scene(1, 0, 80).gt.size() == 0);
  CHECK_THROWS_AS(generate_scene(1, -1, 80), std::invalid_argument);

  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Scene s = generate_scene(seed, 3, 10);
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
      const Box& g = s.gt.boxes[i];
      CHECK(g.x1 >= 0.0);
      CHECK(g.y1 >= 0.0);
      CHECK(g.x2 <= 1.0);
      CHECK(g.y2 <= 1.0);
      CHECK(g.area() > 0.0);
      CHECK(s.gt.labels[i] >= 0);
      CHECK(s.gt.labels[i] < 10);
    }
  }
}

TEST_CASE("stage noise schedule") {
  const NoiseSchedule noise{0.12, 5, 0.5};
  CHECK(stage_sigma(noise, 1, 6) == doctest::Approx(0.12));
  CHECK(stage_sigma(noise, 6, 6) == doctest::Approx(0.02));
  CHECK_THROWS_AS(stage_sigma(noise, 0, 6), std::out_of_range);
}

TEST_CASE("stage predictions") {
  const Scene s = generate_scene(7, 3, 5);

  SUBCASE("zero noise copies the ground truths with full confidence") {
    const StagePredictions sp = simulate_stage_predictions(s, 1, 6, 20, 5, NoiseSchedule{0.0, 4, 0.5});
    for (int j = 0; j < 12; ++j) {
      const int i = sp.cluster_of[static_cast<std::size_t>(j)];
      CHECK(i == j / 4);
      CHECK(sp.preds.boxes[static_cast<std::size_t>(j)] == s.gt.boxes[static_cast<std::size_t>(i)]);
      CHECK(sp.preds.scores.scores(j, s.gt.labels[static_cast<std::size_t>(i)]) == 1.0);
    }
    for (int j = 12; j < 20; ++j) {
      CHECK(sp.cluster_of[static_cast<std::size_t>(j)] == kBackground);
      CHECK(sp.preds.scores.scores.row(j).maxCoeff() <= 0.3);
    }
  }

  SUBCASE("rows are distributions, boxes valid") {
    const StagePredictions sp = simulate_stage_predictions(s, 2, 6, 30, 5, NoiseSchedule{});
    CHECK(sp.preds.size() == 30);
    CHECK((sp.preds.scores.scores.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK_NOTHROW(validate(sp.preds.boxes));
  }

  SUBCASE("n equal to m and n below m") {
    const StagePredictions sp = simulate_stage_predictions(s, 1, 6, 3, 5, NoiseSchedule{});
    CHECK(sp.cluster_of == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(simulate_stage_predictions(s, 1, 6, 2, 5, NoiseSchedule{}), std::invalid_argument);
  }

  SUBCASE("deterministic per seed and stage") {
    const StagePredictions a = simulate_stage_predictions(s, 3, 6, 25, 5, NoiseSchedule{});
    const StagePredictions b = simulate_stage_predictions(s, 3, 6, 25, 5, NoiseSchedule{});
    CHECK(a.preds.boxes.boxes == b.preds.boxes.boxes);
    CHECK(a.preds.scores.scores == b.preds.scores.scores);
  }
}

TEST_CASE("later stages localize better on average") {
  double early = 0.0, late = 0.0;
  SimConfig cfg;
  cfg.m = 3;
  cfg.n = 40;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimulationReport r = run_iterative_assignment(generate_scene(seed, cfg.m, cfg.num_classes), cfg);
    early += r.stages.front().mean_matched_iou;
    late += r.stages.back().mean_matched_iou;
  }
  CHECK(late >= early);
}

TEST_CASE("iterative assignment") {
  SimConfig cfg;
  cfg.m = 4;
  cfg.n = 60;
  const Scene scene = generate_scene(3, cfg.m, cfg.num_classes);

  SUBCASE("hungarian gives one positive per ground truth at every stage") {
    cfg.assign.matcher = Matcher::hungarian;
    for (const auto& s : run_iterative_assignment(scene, cfg).stages) {
      CHECK(s.positives_min == 1);
      CHECK(s.positives_max == 1);
      CHECK(s.background_fraction == doctest::Approx(56.0 / 60.0));
    }
  }

  SUBCASE("ota positives grow and respect the background floor") {
    const SimulationReport r = run_iterative_assignment(scene, cfg);
    REQUIRE(r.stages.size() == 6);
    for (std::size_t t = 1; t < r.stages.size(); ++t) {
      CHECK(r.stages[t].positives_mean >= r.stages[t - 1].positives_mean);
    }
    for (const auto& s : r.stages) CHECK(s.background_fraction >= 0.2);
  }

  SUBCASE("single stage equals a direct assignment") {
    cfg.stages = 1;
    const SimulationReport r = run_iterative_assignment(scene, cfg);
    const StagePredictions sp =
        simulate_stage_predictions(scene, 1, 1, cfg.n, cfg.num_classes, cfg.noise);
    AssignConfig acfg = cfg.assign;
    acfg.stages = acfg.stage = 1;
    const AssignResult direct = assign_ota(scene.gt, sp.preds, acfg);
    CHECK(r.stages[0].total_cost == direct.total_cost);
    CHECK(r.stages[0].positives_mean ==
          static_cast<double>(direct.assignment.total_positives()) / cfg.m);
  }

  SUBCASE("reports are deterministic") {
    const std::string a = report_csv(run_iterative_assignment(scene, cfg));
    const std::string b = report_csv(run_iterative_assignment(scene, cfg));
    CHECK(a == b);
    CHECK(a.rfind("stage,positives_mean,", 0) == 0);
    CHECK(a.find("wall_seconds") == std::string::npos);
  }
}

TEST_CASE("aggregation") {
  SimulationReport a, b;
  a.stages.push_back({1, 2.0, 1, 3, 0.5, 10.0, 0.9, 0.0});
  b.stages.push_back({1, 4.0, 2, 5, 0.7, 20.0, 0.7, 0.0});
  const SimulationReport agg = aggregate({a, b});
  CHECK(agg.stages[0].positives_mean == 3.0);
  CHECK(agg.stages[0].positives_min == 1);
  CHECK(agg.stages[0].positives_max == 5);
  CHECK(agg.stages[0].mean_matched_iou == doctest::Approx(0.6));
  CHECK(report_json(agg)["stages"][0]["total_cost"] == 15.0);
  CHECK(aggregate({}).stages.empty());
}
