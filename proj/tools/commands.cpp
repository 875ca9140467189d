#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include <fmt/format.h>

namespace otassign::cli {

namespace {

EngineConfig config_or_default(const std::string& path) {
  return path.empty() ? parse_config("") : load_config(path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("failed writing " + path);
}

const nlohmann::json& field(const nlohmann::json& j, const std::string& key,
                            const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw std::invalid_argument(where + ": missing field \"" + key + "\"");
  }
  return j.at(key);
}

Box parse_box(const nlohmann::json& j, const std::string& where) {
  try {
    return box_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
}

nlohmann::json labels_json(const HardAssignment& a) {
  nlohmann::json labels = nlohmann::json::array();
  for (int l : a.label) {
    if (l == kBackground) {
      labels.push_back("background");
    } else {
      labels.push_back(l);
    }
  }
  return labels;
}

}  // namespace

SceneFile parse_scene(const nlohmann::json& j) {
  SceneFile s;
  const auto& size = field(j, "image_size", "scene");
  if (!size.is_array() || size.size() != 2 || !size[0].is_number() || !size[1].is_number()) {
    throw std::invalid_argument("image_size: expected [W, H]");
  }
  s.image_w = size[0].get<double>();
  s.image_h = size[1].get<double>();
  if (!(s.image_w > 0.0 && s.image_h > 0.0)) {
    throw std::invalid_argument("image_size: W and H must be positive");
  }
  auto normalize = [&](Box b) {
    return Box{b.x1 / s.image_w, b.y1 / s.image_h, b.x2 / s.image_w, b.y2 / s.image_h};
  };

  const auto& gts = field(j, "gts", "scene");
  const auto& preds = field(j, "preds", "scene");
  if (!gts.is_array()) throw std::invalid_argument("gts: expected an array");
  if (!preds.is_array() || preds.empty()) {
    throw std::invalid_argument("preds: expected a non-empty array");
  }

  s.gts.boxes.units = Units::normalized;
  s.preds.boxes.units = Units::normalized;
  const auto n = static_cast<Eigen::Index>(preds.size());
  Eigen::Index k = -1;
  Eigen::MatrixXd scores;
  for (Eigen::Index p = 0; p < n; ++p) {
    const std::string where = fmt::format("preds[{}]", p);
    const auto& pj = preds[static_cast<std::size_t>(p)];
    s.preds.boxes.boxes.push_back(normalize(parse_box(field(pj, "box", where), where + ".box")));
    const auto& sc = field(pj, "scores", where);
    if (!sc.is_array() || sc.empty()) {
      throw std::invalid_argument(where + ".scores: expected a non-empty array");
    }
    if (k < 0) {
      k = static_cast<Eigen::Index>(sc.size());
      scores.resize(n, k);
    } else if (static_cast<Eigen::Index>(sc.size()) != k) {
      throw std::invalid_argument(fmt::format("{}.scores: has {} classes, expected {}", where,
                                              sc.size(), k));
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto& v = sc[static_cast<std::size_t>(c)];
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
        throw std::invalid_argument(where + ".scores: entries must be numbers in [0, 1]");
      }
      scores(p, c) = v.get<double>();
    }
  }
  s.preds.scores = ClassScores(std::move(scores));

  for (std::size_t i = 0; i < gts.size(); ++i) {
    const std::string where = fmt::format("gts[{}]", i);
    s.gts.boxes.boxes.push_back(normalize(parse_box(field(gts[i], "box", where), where + ".box")));
    const auto& label = field(gts[i], "label", where);
    if (!label.is_number_integer() || label.get<int>() < 0 || label.get<int>() >= k) {
      throw std::invalid_argument(
          fmt::format("{}.label: expected an integer class in [0, {})", where, k));
    }
    s.gts.labels.push_back(label.get<int>());
  }
  return s;
}

SceneFile load_scene(const std::string& path) { return parse_scene(read_json(path)); }

nlohmann::json scene_to_json(const SceneFile& s) {
  auto absolute = [&](const Box& b) {
    return to_json(Box{b.x1 * s.image_w, b.y1 * s.image_h, b.x2 * s.image_w, b.y2 * s.image_h});
  };
  nlohmann::json gts = nlohmann::json::array(), preds = nlohmann::json::array();
  for (std::size_t i = 0; i < s.gts.size(); ++i) {
    gts.push_back({{"box", absolute(s.gts.boxes[i])}, {"label", s.gts.labels[i]}});
  }
  for (std::size_t j = 0; j < s.preds.size(); ++j) {
    const Eigen::RowVectorXd row = s.preds.scores.scores.row(static_cast<Eigen::Index>(j));
    preds.push_back({{"box", absolute(s.preds.boxes[j])},
                     {"scores", std::vector<double>(row.data(), row.data() + row.size())}});
  }
  return {{"image_size", {s.image_w, s.image_h}}, {"gts", gts}, {"preds", preds}};
}

unsigned worker_count() {
  unsigned n = 0;
  if (const char* env = std::getenv("OTA_ASSIGN_THREADS")) {
    try {
      n = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

// ---------------------------------------------------------------------------

int cmd_assign(const AssignArgs& a, std::ostream& out, std::ostream& err) {
  EngineConfig cfg;
  SceneFile scene;
  try {
    cfg = config_or_default(a.config);
    scene = load_scene(a.scene);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  AssignResult r;
  try {
    r = assign(scene.gts, scene.preds, cfg.solver);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  nlohmann::json j = {
      {"matcher", std::string(to_string(cfg.solver.matcher))},
      {"stage", cfg.solver.stage},
      {"labels", labels_json(r.assignment)},
      {"positives_per_gt", r.assignment.positives_per_gt},
      {"supplies",
       {{"gt_units", r.supply.gt_units}, {"background_units", r.supply.background_units}}},
      {"marginal_error", r.plan.marginal_error},
      {"converged", r.plan.converged},
      {"total_cost", r.total_cost},
  };
  try {
    if (a.out.empty() || a.out == "-") {
      out << j.dump(2) << "\n";
    } else {
      write_file(a.out, j.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  if (!r.plan.converged) {
    err << fmt::format("sinkhorn did not converge: marginal error {} > tol {}\n",
                       r.plan.marginal_error, cfg.solver.sinkhorn.tol);
    return kNotConverged;
  }
  return kOk;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  EngineConfig cfg;
  try {
    cfg = config_or_default(a.config);
    if (a.seeds) {
      if (*a.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
      cfg.simulate.seeds = *a.seeds;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  const sim::SimConfig sc = cfg.sim_config();
  const auto seeds = static_cast<std::size_t>(cfg.simulate.seeds);

  std::vector<sim::SimulationReport> runs(seeds);
  std::vector<std::string> failures(seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds; i = next++) {
      try {
        const sim::Scene scene = sim::generate_scene(cfg.simulate.seed + i, sc.m, sc.num_classes);
        runs[i] = sim::run_iterative_assignment(scene, sc);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  {
    const unsigned nthreads = std::min<unsigned>(worker_count(), static_cast<unsigned>(seeds));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (std::size_t i = 0; i < seeds; ++i) {
    if (!failures[i].empty()) {
      err << fmt::format("error: seed {}: {}\n", cfg.simulate.seed + i, failures[i]);
      return kInputError;
    }
  }

  const sim::SimulationReport agg = sim::aggregate(runs);
  nlohmann::json j = sim::report_json(agg, a.timing);
  j["matcher"] = std::string(to_string(cfg.solver.matcher));
  j["seeds"] = cfg.simulate.seeds;
  j["first_seed"] = cfg.simulate.seed;
  j["m"] = sc.m;
  j["n"] = sc.n;
  j["stages_total"] = sc.stages;

  std::string base = a.report;
  for (const char* ext : {".csv", ".json"}) {
    if (base.ends_with(ext)) base.resize(base.size() - std::string_view(ext).size());
  }
  try {
    write_file(base + ".csv", sim::report_csv(agg, a.timing));
    write_file(base + ".json", j.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  out << sim::report_csv(agg, a.timing);
  return kOk;
}

int cmd_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
  EngineConfig cfg;
  SceneFile scene;
  try {
    cfg = config_or_default(a.config);
    scene = load_scene(a.scene);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  const auto rows = static_cast<double>(scene.gts.size() + 1);
  const auto n = static_cast<double>(scene.preds.size());
  if (std::pow(rows, n) > kOracleEnumerationLimit) {
    err << fmt::format(
        "error: refusing comparison, (m+1)^n = {}^{} exceeds the exact-oracle enumeration guard "
        "of {}\n",
        rows, n, kOracleEnumerationLimit);
    return kInputError;
  }

  AssignConfig acfg = cfg.compare_solver();
  double hungarian_cost = 0.0, sinkhorn_cost = 0.0, oracle_cost = 0.0, agreement = 0.0;
  bool converged = true;
  try {
    acfg.matcher = Matcher::ota;
    const AssignResult ota = assign_ota(scene.gts, scene.preds, acfg);
    const TransportPlan exact = exact_transport_oracle(ota.cost, ota.supply);
    const HardAssignment exact_labels = harden(exact, ota.supply);
    sinkhorn_cost = ota.total_cost;
    oracle_cost = exact.transported_cost(ota.cost);
    converged = ota.plan.converged;
    int same = 0;
    for (std::size_t j = 0; j < exact_labels.label.size(); ++j) {
      same += exact_labels.label[j] == ota.assignment.label[j] ? 1 : 0;
    }
    agreement = static_cast<double>(same) / static_cast<double>(exact_labels.label.size());

    acfg.matcher = Matcher::hungarian;
    const AssignResult hung = assign_hungarian(scene.gts, scene.preds, acfg);
    hungarian_cost = hung.total_cost;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  out << fmt::format("{:<16}{:<16}{:<16}{:<16}\n", "hungarian_cost", "sinkhorn_cost",
                     "oracle_cost", "label_agreement");
  out << fmt::format("{:<16.6f}{:<16.6f}{:<16.6f}{:<16.4f}\n", hungarian_cost, sinkhorn_cost,
                     oracle_cost, agreement);
  if (!converged) {
    err << "sinkhorn did not converge within tolerance\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_dpg_demo(const DpgDemoArgs& a, std::ostream& out, std::ostream& err) {
  EngineConfig cfg;
  dpg::StaircaseParams params;
  dpg::ExpertBank bank;
  std::uint64_t seed = 0;
  try {
    cfg = config_or_default(a.config);
    if (a.tau) {
      cfg.dpg.tau = *a.tau;
      cfg.dpg.validate();
    }
    if (!a.params.empty()) {
      auto loaded = dpg::params_from_json(read_json(a.params), cfg.dpg);
      params = std::move(loaded.params);
      bank = std::move(loaded.bank);
      seed = a.seed.value_or(cfg.simulate.seed);
    } else if (a.seed) {
      seed = *a.seed;
      params = dpg::random_params(cfg.dpg, seed);
      bank = dpg::random_bank(cfg.dpg, seed + 1);
    } else {
      throw std::invalid_argument("dpg-demo needs --params FILE or --seed N");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  dpg::DynamicProposals result;
  try {
    const dpg::FeaturePyramid pyr = dpg::random_pyramid(cfg.dpg.channels, cfg.dpg.p2_size, seed + 2);
    result = dpg::generate_dynamic_proposals(pyr, bank, params);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  const Eigen::MatrixXd& w = result.weights.w;
  std::vector<double> entropy, max_weight;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    double h = 0.0;
    for (Eigen::Index e = 0; e < w.cols(); ++e) {
      if (w(r, e) > 0.0) h -= w(r, e) * std::log(w(r, e));
    }
    entropy.push_back(h);
    max_weight.push_back(w.row(r).maxCoeff());
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto rows_of = [](const Eigen::MatrixXd& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const Eigen::RowVectorXd row = m.row(r);
      arr.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    return arr;
  };

  nlohmann::json j = {
      {"tau", cfg.dpg.tau},
      {"seed", seed},
      {"boxes", rows_of(result.proposals.boxes)},
      {"features", rows_of(result.proposals.features)},
      {"weights", rows_of(w)},
      {"weight_stats",
       {{"entropy", entropy},
        {"max_weight", max_weight},
        {"mean_entropy", mean(entropy)},
        {"mean_max_weight", mean(max_weight)}}},
  };
  try {
    if (a.out.empty() || a.out == "-") {
      out << j.dump() << "\n";
    } else {
      write_file(a.out, j.dump() + "\n");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  out << fmt::format("tau={} mean_max_weight={:.6f} mean_entropy={:.6f}\n", cfg.dpg.tau,
                     mean(max_weight), mean(entropy));
  return kOk;
}

}  // namespace otassign::cli
