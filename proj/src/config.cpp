#include "slowcal/config.hpp"

#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <set>

#include "slowcal/errors.hpp"

namespace slowcal {

using nlohmann::json;

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::quadratic:
      return "quadratic";
    case ProblemKind::logistic:
      return "logistic";
    case ProblemKind::mnist_logistic:
      return "mnist-logistic";
  }
  return "quadratic";
}

double ProblemSpec::resolved_l2() const {
  if (l2) return *l2;
  return kind == ProblemKind::mnist_logistic ? 1e-4 : 1e-2;
}

std::size_t ExperimentSpec::rounds_for(std::size_t k) const {
  if (!samples_per_machine) return rounds;
  if (*samples_per_machine % k != 0 || *samples_per_machine < k) {
    throw ConfigError(fmt::format("samples_per_machine = {} is not a positive multiple of K = {}",
                                  *samples_per_machine, k));
  }
  return *samples_per_machine / k;
}

LrSpec LrSpec::parse(const std::string& text) {
  LrSpec out;
  if (text == "theory") return out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !(v > 0.0)) {
      throw ConfigError(fmt::format("lr: '{}' is not a positive number", s));
    }
    return v;
  };
  if (text.rfind("fixed:", 0) == 0) {
    out.mode = Mode::fixed;
    out.value = number(text.substr(6));
    return out;
  }
  if (text.rfind("grid:", 0) == 0) {
    out.mode = Mode::grid;
    json values;
    try {
      values = json::parse(text.substr(5));
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("lr: cannot parse grid in '{}'", text));
    }
    if (!values.is_array() || values.empty()) throw ConfigError("lr: grid must be a nonempty list");
    for (const auto& v : values) {
      if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError("lr: grid values must be positive numbers");
      out.grid.push_back(v.get<double>());
    }
    return out;
  }
  throw ConfigError(fmt::format("lr: expected theory | fixed:<v> | grid:[...], got '{}'", text));
}

std::string LrSpec::to_string() const {
  switch (mode) {
    case Mode::theory:
      return "theory";
    case Mode::fixed:
      return fmt::format("fixed:{}", value);
    case Mode::grid:
      return "grid:" + json(grid).dump();
  }
  return "theory";
}

namespace {

template <typename T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config field '{}' has the wrong type", key));
  }
}

std::size_t positive_size(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw ConfigError(fmt::format("config field '{}' must be a positive integer", key));
  }
  return v.get<std::size_t>();
}

std::vector<std::size_t> size_list(const json& j, const char* key) {
  const auto& v = j.at(key);
  std::vector<std::size_t> out;
  if (v.is_array()) {
    if (v.empty()) throw ConfigError(fmt::format("config field '{}' is an empty list", key));
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long long>() < 1) {
        throw ConfigError(fmt::format("config field '{}' must hold positive integers", key));
      }
      out.push_back(e.get<std::size_t>());
    }
  } else {
    out.push_back(positive_size(j, key));
  }
  return out;
}

double nonneg(const json& j, const char* key) {
  const double v = get_field<double>(j, key);
  if (!(v >= 0.0)) throw ConfigError(fmt::format("config field '{}' must be nonnegative", key));
  return v;
}

double positive(const json& j, const char* key) {
  const double v = get_field<double>(j, key);
  if (!(v > 0.0)) throw ConfigError(fmt::format("config field '{}' must be positive", key));
  return v;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "problem", "d",      "M",         "K",        "R",           "curvature",  "eig_min",
      "eig_max", "center_norm", "spread", "gstar", "sigma",       "lambda",     "C",
      "examples_per_machine", "cluster_spread", "skew", "dirichlet_alpha", "train_limit",
      "problem_seed", "algorithm", "schedule", "lr", "seeds", "diagnostics", "eval_every",
      "samples_per_machine", "out", "threads"};
  return keys;
}

}  // namespace

ExperimentSpec parse_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().contains(key)) throw ConfigError(fmt::format("unknown config field '{}'", key));
  }

  ExperimentSpec spec;
  auto& p = spec.problem;
  if (j.contains("problem")) {
    const auto kind = get_field<std::string>(j, "problem");
    if (kind == "quadratic") {
      p.kind = ProblemKind::quadratic;
    } else if (kind == "logistic") {
      p.kind = ProblemKind::logistic;
    } else if (kind == "mnist-logistic") {
      p.kind = ProblemKind::mnist_logistic;
    } else {
      throw ConfigError(fmt::format("config field 'problem': expected quadratic | logistic | mnist-logistic, got '{}'", kind));
    }
  }
  if (p.kind == ProblemKind::logistic) p.dimension = 10;
  if (j.contains("d")) p.dimension = positive_size(j, "d");
  if (j.contains("curvature")) {
    const auto c = get_field<std::string>(j, "curvature");
    if (c != "shared" && c != "per-machine") {
      throw ConfigError(fmt::format("config field 'curvature': expected shared | per-machine, got '{}'", c));
    }
    p.shared_curvature = c == "shared";
  }
  if (j.contains("eig_min")) p.eig_min = nonneg(j, "eig_min");
  if (j.contains("eig_max")) p.eig_max = positive(j, "eig_max");
  if (p.eig_min > p.eig_max) throw ConfigError("config fields 'eig_min' > 'eig_max'");
  if (j.contains("center_norm")) p.center_norm = nonneg(j, "center_norm");
  if (j.contains("spread")) p.spread = nonneg(j, "spread");
  if (j.contains("gstar")) p.target_gstar = nonneg(j, "gstar");
  if (j.contains("sigma")) p.sigma = nonneg(j, "sigma");
  if (j.contains("lambda")) p.l2 = nonneg(j, "lambda");
  if (j.contains("C")) p.classes = positive_size(j, "C");
  if (j.contains("examples_per_machine")) p.examples_per_machine = positive_size(j, "examples_per_machine");
  if (j.contains("cluster_spread")) p.cluster_spread = nonneg(j, "cluster_spread");
  if (j.contains("skew")) p.skew = positive(j, "skew");
  if (j.contains("dirichlet_alpha")) p.dirichlet_alpha = positive(j, "dirichlet_alpha");
  if (j.contains("train_limit")) p.train_limit = positive_size(j, "train_limit");
  if (j.contains("problem_seed")) {
    const auto& v = j.at("problem_seed");
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError("config field 'problem_seed' must be a nonnegative integer");
    }
    p.seed = v.get<std::uint64_t>();
  }

  if (j.contains("algorithm")) {
    spec.algorithms.clear();
    const auto& a = j.at("algorithm");
    if (a.is_array()) {
      if (a.empty()) throw ConfigError("config field 'algorithm' is an empty list");
      for (const auto& e : a) {
        if (!e.is_string()) throw ConfigError("config field 'algorithm' must hold strings");
        spec.algorithms.push_back(parse_algorithm(e.get<std::string>()));
      }
    } else {
      spec.algorithms.push_back(parse_algorithm(get_field<std::string>(j, "algorithm")));
    }
  }
  if (j.contains("schedule")) spec.schedule = WeightSchedule::parse(get_field<std::string>(j, "schedule"));
  if (j.contains("M")) spec.machines = size_list(j, "M");
  if (j.contains("K")) spec.local_steps = size_list(j, "K");
  if (j.contains("R")) spec.rounds = positive_size(j, "R");
  if (j.contains("samples_per_machine")) spec.samples_per_machine = positive_size(j, "samples_per_machine");
  if (j.contains("lr")) {
    const auto& lr = j.at("lr");
    if (lr.is_number()) {
      spec.lr.mode = LrSpec::Mode::fixed;
      spec.lr.value = positive(j, "lr");
    } else if (lr.is_array()) {
      spec.lr = LrSpec::parse("grid:" + lr.dump());
    } else {
      spec.lr = LrSpec::parse(get_field<std::string>(j, "lr"));
    }
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    spec.seeds.clear();
    if (s.is_array()) {
      if (s.empty()) throw ConfigError("config field 'seeds' is an empty list");
      for (const auto& e : s) {
        if (!e.is_number_integer() || e.get<long long>() < 0) {
          throw ConfigError("config field 'seeds' must hold nonnegative integers");
        }
        spec.seeds.push_back(e.get<std::uint64_t>());
      }
    } else {
      if (!s.is_number_integer() || s.get<long long>() < 0) {
        throw ConfigError("config field 'seeds' must be a nonnegative integer or a list of them");
      }
      spec.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  if (j.contains("diagnostics")) spec.diagnostics = get_field<bool>(j, "diagnostics");
  if (j.contains("eval_every")) spec.eval_every = positive_size(j, "eval_every");
  if (j.contains("out")) spec.output_dir = get_field<std::string>(j, "out");
  if (j.contains("threads")) {
    const auto& t = j.at("threads");
    if (!t.is_number_integer() || t.get<long long>() < 0) {
      throw ConfigError("config field 'threads' must be a nonnegative integer");
    }
    spec.threads = t.get<std::size_t>();
  }

  if (p.kind == ProblemKind::logistic && p.dimension < p.classes) {
    throw ConfigError("config fields 'd' < 'C' for the logistic cluster problem");
  }
  for (auto k : spec.local_steps) (void)spec.rounds_for(k);
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_spec(j);
}

json to_json(const ExperimentSpec& spec) {
  const auto& p = spec.problem;
  json j;
  j["problem"] = to_string(p.kind);
  j["d"] = p.dimension;
  j["curvature"] = p.shared_curvature ? "shared" : "per-machine";
  j["eig_min"] = p.eig_min;
  j["eig_max"] = p.eig_max;
  j["center_norm"] = p.center_norm;
  j["spread"] = p.spread;
  if (p.target_gstar) j["gstar"] = *p.target_gstar;
  j["sigma"] = p.sigma;
  j["lambda"] = p.resolved_l2();
  j["C"] = p.classes;
  j["examples_per_machine"] = p.examples_per_machine;
  j["cluster_spread"] = p.cluster_spread;
  j["skew"] = p.skew;
  j["dirichlet_alpha"] = p.dirichlet_alpha;
  if (p.train_limit) j["train_limit"] = *p.train_limit;
  j["problem_seed"] = p.seed;
  json algs = json::array();
  for (auto a : spec.algorithms) algs.push_back(to_string(a));
  j["algorithm"] = algs;
  j["schedule"] = spec.schedule.name();
  j["M"] = spec.machines;
  j["K"] = spec.local_steps;
  j["R"] = spec.rounds;
  if (spec.samples_per_machine) j["samples_per_machine"] = *spec.samples_per_machine;
  j["lr"] = spec.lr.to_string();
  j["seeds"] = spec.seeds;
  j["diagnostics"] = spec.diagnostics;
  j["eval_every"] = spec.eval_every;
  j["out"] = spec.output_dir.string();
  j["threads"] = spec.threads;
  return j;
}

void apply_env_overrides(ExperimentSpec& spec) {
  if (const char* out = std::getenv("SLOWCAL_OUT_DIR"); out && *out) spec.output_dir = out;
  if (const char* threads = std::getenv("SLOWCAL_THREADS"); threads && *threads) {
    try {
      spec.threads = static_cast<std::size_t>(std::stoul(threads));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("SLOWCAL_THREADS='{}' is not a nonnegative integer", threads));
    }
  }
}

}  // namespace slowcal
