#include "otassign/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace otassign {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument(fmt::format("config key {}: cannot parse \"{}\"", key, value));
  }
  return out;
}

using Setter = std::function<void(EngineConfig&, std::string_view key, std::string_view value)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](EngineConfig& c, std::string_view k, std::string_view v) {
    field(c) = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"cost.alpha", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.alpha; })},
      {"cost.lambda_cls", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.lambda_cls; })},
      {"cost.lambda_l1", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.lambda_l1; })},
      {"cost.lambda_giou", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.lambda_giou; })},
      {"cost.focal_gamma", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.focal_gamma; })},
      {"cost.focal_alpha", number<double>([](EngineConfig& c) -> double& { return c.solver.cost.focal_alpha; })},
      {"solver.q", number<int>([](EngineConfig& c) -> int& { return c.solver.q; })},
      {"solver.stages", number<int>([](EngineConfig& c) -> int& { return c.solver.stages; })},
      {"solver.stage", number<int>([](EngineConfig& c) -> int& { return c.solver.stage; })},
      {"solver.epsilon", number<double>([](EngineConfig& c) -> double& { return c.solver.sinkhorn.epsilon; })},
      {"solver.anneal_halvings", number<int>([](EngineConfig& c) -> int& { return c.solver.sinkhorn.anneal_halvings; })},
      {"solver.max_iters", number<int>([](EngineConfig& c) -> int& { return c.solver.sinkhorn.max_iters; })},
      {"solver.tol", number<double>([](EngineConfig& c) -> double& { return c.solver.sinkhorn.tol; })},
      {"solver.newton_steps", number<int>([](EngineConfig& c) -> int& { return c.solver.sinkhorn.newton_steps; })},
      {"solver.matcher", [](EngineConfig& c, std::string_view, std::string_view v) {
         c.solver.matcher = matcher_from_string(v);
       }},
      {"dpg.N_e", number<int>([](EngineConfig& c) -> int& { return c.dpg.num_experts; })},
      {"dpg.N_p", number<int>([](EngineConfig& c) -> int& { return c.dpg.num_proposals; })},
      {"dpg.C", number<int>([](EngineConfig& c) -> int& { return c.dpg.channels; })},
      {"dpg.S", number<int>([](EngineConfig& c) -> int& { return c.dpg.gate_size; })},
      {"dpg.D_h", number<int>([](EngineConfig& c) -> int& { return c.dpg.hidden; })},
      {"dpg.tau", number<double>([](EngineConfig& c) -> double& { return c.dpg.tau; })},
      {"dpg.H2", number<int>([](EngineConfig& c) -> int& { return c.dpg.p2_size; })},
      {"dpg.gating", [](EngineConfig& c, std::string_view, std::string_view v) {
         c.dpg.gating = dpg::gating_from_string(v);
       }},
      {"dpg.activation", [](EngineConfig& c, std::string_view, std::string_view v) {
         c.dpg.activation = dpg::activation_from_string(v);
       }},
      {"simulate.m", number<int>([](EngineConfig& c) -> int& { return c.simulate.m; })},
      {"simulate.n", number<int>([](EngineConfig& c) -> int& { return c.simulate.n; })},
      {"simulate.K", number<int>([](EngineConfig& c) -> int& { return c.simulate.K; })},
      {"simulate.seeds", number<int>([](EngineConfig& c) -> int& { return c.simulate.seeds; })},
      {"simulate.seed", number<std::uint64_t>([](EngineConfig& c) -> std::uint64_t& { return c.simulate.seed; })},
      {"simulate.sigma_max", number<double>([](EngineConfig& c) -> double& { return c.simulate.sigma_max; })},
      {"simulate.per_gt", number<int>([](EngineConfig& c) -> int& { return c.simulate.per_gt; })},
      {"simulate.score_width", number<double>([](EngineConfig& c) -> double& { return c.simulate.score_width; })},
      {"compare.epsilon", number<double>([](EngineConfig& c) -> double& { return c.compare.epsilon; })},
      {"compare.anneal_halvings", number<int>([](EngineConfig& c) -> int& { return c.compare.anneal_halvings; })},
  };
  return table;
}

}  // namespace

void EngineConfig::validate() const {
  solver.cost.validate();
  solver.sinkhorn.validate();
  if (solver.q < 1) throw std::invalid_argument("solver.q must be >= 1");
  if (solver.stages < 1) throw std::invalid_argument("solver.stages must be >= 1");
  if (solver.stage < 1 || solver.stage > solver.stages) {
    throw std::invalid_argument("solver.stage must lie in [1, solver.stages]");
  }
  dpg.validate();
  if (simulate.m < 0) throw std::invalid_argument("simulate.m must be >= 0");
  if (simulate.n < 1 || simulate.n < simulate.m) {
    throw std::invalid_argument("simulate.n must be >= max(1, simulate.m)");
  }
  if (simulate.K < 1) throw std::invalid_argument("simulate.K must be >= 1");
  if (simulate.seeds < 1) throw std::invalid_argument("simulate.seeds must be >= 1");
  if (simulate.sigma_max < 0.0) throw std::invalid_argument("simulate.sigma_max must be >= 0");
  if (simulate.per_gt < 1) throw std::invalid_argument("simulate.per_gt must be >= 1");
  if (!(simulate.score_width > 0.0)) throw std::invalid_argument("simulate.score_width must be > 0");
  compare_solver().sinkhorn.validate();
}

AssignConfig EngineConfig::compare_solver() const {
  AssignConfig a = solver;
  a.sinkhorn.epsilon = compare.epsilon;
  a.sinkhorn.anneal_halvings = compare.anneal_halvings;
  return a;
}

sim::SimConfig EngineConfig::sim_config() const {
  sim::SimConfig s;
  s.m = simulate.m;
  s.n = simulate.n;
  s.num_classes = simulate.K;
  s.stages = solver.stages;
  s.noise = {simulate.sigma_max, simulate.per_gt, simulate.score_width};
  s.assign = solver;
  return s;
}

EngineConfig parse_config(std::string_view text) {
  EngineConfig cfg;
  bool stage_given = false;
  std::istringstream in{std::string(text)};
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("config line {}: expected key=value", line_no));
    }
    const auto key = trim(body.substr(0, eq));
    const auto value = trim(body.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw std::invalid_argument(fmt::format("config line {}: unknown key \"{}\"", line_no, key));
    }
    if (key == "solver.stage") stage_given = true;
    try {
      it->second(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(fmt::format("config line {} ({}): {}", line_no, key, e.what()));
    }
  }
  // Without an explicit stage, assignments run at the final stage.
  if (!stage_given) cfg.solver.stage = cfg.solver.stages;
  cfg.validate();
  return cfg;
}

EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const EngineConfig& c) {
  std::string out;
  auto line = [&](std::string_view k, const auto& v) { out += fmt::format("{}={}\n", k, v); };
  line("cost.alpha", c.solver.cost.alpha);
  line("cost.lambda_cls", c.solver.cost.lambda_cls);
  line("cost.lambda_l1", c.solver.cost.lambda_l1);
  line("cost.lambda_giou", c.solver.cost.lambda_giou);
  line("cost.focal_gamma", c.solver.cost.focal_gamma);
  line("cost.focal_alpha", c.solver.cost.focal_alpha);
  line("solver.q", c.solver.q);
  line("solver.stages", c.solver.stages);
  line("solver.stage", c.solver.stage);
  line("solver.epsilon", c.solver.sinkhorn.epsilon);
  line("solver.anneal_halvings", c.solver.sinkhorn.anneal_halvings);
  line("solver.max_iters", c.solver.sinkhorn.max_iters);
  line("solver.tol", c.solver.sinkhorn.tol);
  line("solver.newton_steps", c.solver.sinkhorn.newton_steps);
  line("solver.matcher", to_string(c.solver.matcher));
  line("dpg.N_e", c.dpg.num_experts);
  line("dpg.N_p", c.dpg.num_proposals);
  line("dpg.C", c.dpg.channels);
  line("dpg.S", c.dpg.gate_size);
  line("dpg.D_h", c.dpg.hidden);
  line("dpg.tau", c.dpg.tau);
  line("dpg.H2", c.dpg.p2_size);
  line("dpg.gating", dpg::to_string(c.dpg.gating));
  line("dpg.activation", dpg::to_string(c.dpg.activation));
  line("simulate.m", c.simulate.m);
  line("simulate.n", c.simulate.n);
  line("simulate.K", c.simulate.K);
  line("simulate.seeds", c.simulate.seeds);
  line("simulate.seed", c.simulate.seed);
  line("simulate.sigma_max", c.simulate.sigma_max);
  line("simulate.per_gt", c.simulate.per_gt);
  line("simulate.score_width", c.simulate.score_width);
  line("compare.epsilon", c.compare.epsilon);
  line("compare.anneal_halvings", c.compare.anneal_halvings);
  return out;
}

}  // namespace otassign
