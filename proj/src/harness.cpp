#include "afa/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "afa/imitation.hpp"
#include "afa/parallel.hpp"

namespace afa {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (alphas.empty()) throw ConfigError("alphas must be non-empty");
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    if (!(alphas[t] >= 0.0) || !std::isfinite(alphas[t])) throw ConfigError("alphas must be finite and >= 0");
    if (t > 0 && !(alphas[t] > alphas[t - 1])) throw ConfigError("alphas must be strictly increasing");
  }
  if (policies.empty()) throw ConfigError("at least one policy is required");
  std::set<std::string> names;
  for (const auto& p : policies) {
    if (!names.insert(p.name).second) throw ConfigError("duplicate policy name '" + p.name + "'");
    if (p.kind == "random" && p.budgets.empty())
      throw ConfigError("random policy '" + p.name + "' needs budgets");
    if (p.kind == "student" && p.student_path.empty()) throw ConfigError("student policy needs student_path");
  }
  const auto& ds = dataset;
  if (ds.kind != "cube" && ds.kind != "guide" && ds.kind != "csv")
    throw ConfigError("unknown dataset kind '" + ds.kind + "'");
  if (ds.kind == "csv" && ds.path.empty()) throw ConfigError("csv dataset needs a path");
  static const std::set<std::string> predictor_kinds{"masked_linear", "knn", "table", "cube_ground_truth", "file"};
  if (!predictor_kinds.count(predictor.kind)) throw ConfigError("unknown predictor kind '" + predictor.kind + "'");
  if (predictor.kind == "cube_ground_truth" && ds.kind != "cube")
    throw ConfigError("cube_ground_truth predictor needs the cube dataset");
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      auto& s = c.dataset;
      s.kind = get_or(d, "kind", s.kind);
      s.n = get_or(d, "n", s.n);
      s.sigma = get_or(d, "sigma", s.sigma);
      s.d = get_or(d, "d", s.d);
      s.path = get_or(d, "path", std::string());
      s.label_column = get_or(d, "label_column", s.label_column);
      if (d.contains("task")) s.task = parse_task_kind(d.at("task").get<std::string>());
      s.seed = get_or(d, "seed", s.seed);
      s.max_test = get_or(d, "max_test", s.max_test);
      if (d.contains("split")) {
        const auto& f = d.at("split");
        s.split.train = get_or(f, "train", s.split.train);
        s.split.val = get_or(f, "val", s.split.val);
        s.split.test = get_or(f, "test", s.split.test);
      }
    }
    if (j.contains("predictor")) {
      const auto& p = j.at("predictor");
      auto& s = c.predictor;
      s.kind = get_or(p, "kind", s.kind);
      if (p.contains("linear")) s.linear = linear_config_from_json(p.at("linear"));
      s.k = get_or(p, "k", s.k);
      if (p.contains("table")) s.table = TrainerSpec::from_json(p.at("table"));
      s.path = get_or(p, "path", std::string());
      s.max_train = get_or(p, "max_train", s.max_train);
    }
    for (const auto& p : j.value("policies", json::array())) {
      PolicySpec s;
      s.kind = get_or(p, "kind", s.kind);
      s.name = get_or(p, "name", s.kind);
      if (p.contains("aaco")) s.aaco = aaco_config_from_json(p.at("aaco"));
      s.budgets = get_or(p, "budgets", s.budgets);
      s.order = get_or(p, "order", s.order);
      s.student_path = get_or(p, "student_path", std::string());
      if (p.contains("initial_feature")) s.initial_feature = p.at("initial_feature").get<int>();
      static const std::set<std::string> kinds{"aaco",           "random", "fixed_order", "greedy_cheating",
                                               "nongreedy_cheating", "student"};
      if (!kinds.count(s.kind)) throw ConfigError("unknown policy kind '" + s.kind + "'");
      c.policies.push_back(std::move(s));
    }
    c.alphas = get_or(j, "alphas", c.alphas);
    if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
    c.seed = get_or(j, "seed", c.seed);
    c.threads = get_or(j, "threads", c.threads);
    c.output_dir = get_or(j, "output_dir", std::string());
    c.keep_traces = get_or(j, "keep_traces", c.keep_traces);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json policies = json::array();
  for (const auto& p : c.policies) {
    json pj{{"name", p.name}, {"kind", p.kind}, {"aaco", to_json(p.aaco)}, {"budgets", p.budgets},
            {"order", p.order}, {"student_path", p.student_path.string()}};
    if (p.initial_feature) pj["initial_feature"] = *p.initial_feature;
    policies.push_back(std::move(pj));
  }
  const auto& d = c.dataset;
  return json{{"dataset",
               {{"kind", d.kind},
                {"n", d.n},
                {"sigma", d.sigma},
                {"d", d.d},
                {"path", d.path.string()},
                {"label_column", d.label_column},
                {"task", to_string(d.task)},
                {"seed", d.seed},
                {"max_test", d.max_test},
                {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}}}},
              {"predictor",
               {{"kind", c.predictor.kind},
                {"linear", linear_config_to_json(c.predictor.linear)},
                {"k", c.predictor.k},
                {"table", c.predictor.table.to_json()},
                {"path", c.predictor.path.string()},
                {"max_train", c.predictor.max_train}}},
              {"policies", policies},
              {"alphas", c.alphas},
              {"loss", to_string(c.loss)},
              {"seed", c.seed},
              {"threads", c.threads},
              {"output_dir", c.output_dir.string()},
              {"keep_traces", c.keep_traces}};
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------

const ReportRow& Report::row(const std::string& policy, double alpha) const {
  for (const auto& r : rows)
    if (r.policy == policy && r.alpha == alpha) return r;
  throw Error("report has no row for " + policy + " at alpha " + fmt(alpha));
}

std::vector<std::vector<double>> acquisition_histogram(std::span<const RollOutTrace> traces, std::size_t d,
                                                       int num_classes) {
  if (num_classes < 1) throw Error("histogram needs at least one category");
  const auto c = static_cast<std::size_t>(num_classes);
  std::vector<std::vector<double>> hist(c, std::vector<double>(d, 0.0));
  std::vector<std::size_t> episodes(c, 0);
  for (const auto& t : traces) {
    if (!t.label) throw Error("histogram needs labelled traces");
    const auto y = static_cast<std::size_t>(*t.label);
    if (y >= c) throw Error("trace label out of range");
    ++episodes[y];
    for (int j : t.acquired) hist[y][static_cast<std::size_t>(j)] += 1.0;
  }
  for (std::size_t k = 0; k < c; ++k)
    if (episodes[k])
      for (auto& v : hist[k]) v /= static_cast<double>(episodes[k]);
  return hist;
}

ReportRow aggregate(const std::string& policy, double alpha, std::span<const RollOutTrace> traces, std::size_t d,
                    TaskKind task, int num_classes) {
  if (traces.empty()) throw Error("aggregate over zero traces");
  ReportRow row;
  row.policy = policy;
  row.alpha = alpha;
  row.instances = traces.size();
  row.feature_frequency.assign(d, 0.0);
  double hits = 0.0, sq = 0.0;
  for (const auto& t : traces) {
    row.mean_loss += t.loss;
    row.mean_acquisitions += static_cast<double>(t.acquisitions());
    row.mean_cost += t.cost;
    row.mean_return += t.ret;
    for (int j : t.acquired) row.feature_frequency[static_cast<std::size_t>(j)] += 1.0;
    if (!t.label) continue;
    if (task == TaskKind::kClassification) {
      hits += t.prediction.argmax() == static_cast<int>(*t.label);
    } else {
      const double e = t.prediction.value - *t.label;
      sq += e * e;
    }
  }
  const auto n = static_cast<double>(traces.size());
  row.mean_loss /= n;
  row.mean_acquisitions /= n;
  row.mean_cost /= n;
  row.mean_return /= n;
  for (auto& f : row.feature_frequency) f /= n;
  if (task == TaskKind::kClassification) {
    row.accuracy = hits / n;
    row.histogram = acquisition_histogram(traces, d, num_classes);
  } else {
    row.mse = sq / n;
  }
  return row;
}

namespace {

struct Prepared {
  std::shared_ptr<const Dataset> train;
  Dataset test;
  std::shared_ptr<const NeighborIndex> index;
  PredictorPtr predictor;
};

Prepared prepare(const ExperimentConfig& config) {
  const auto& ds = config.dataset;
  Dataset data;
  if (ds.kind == "cube") {
    CubeConfig cc;
    cc.n = ds.n;
    cc.sigma = ds.sigma;
    cc.seed = ds.seed;
    data = generate_cube(cc);
  } else if (ds.kind == "guide") {
    data = generate_guide(ds.n, ds.d, ds.seed);
  } else {
    data = load_csv(ds.path, ds.label_column, ds.task);
  }
  data.validate();
  const DatasetSplit parts = split(data, ds.split, ds.seed);
  auto [train_std, params] = standardize(parts.train);
  Dataset test = apply_standardization(parts.test, params);
  if (ds.max_test && test.size() > ds.max_test) {
    std::vector<std::size_t> rows(ds.max_test);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    test = test.subset_rows(rows);
  }
  const auto& ps = config.predictor;
  Dataset reference = train_std;
  if (ps.max_train && reference.size() > ps.max_train) {
    std::vector<std::size_t> rows(ps.max_train);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    reference = reference.subset_rows(rows);
  }
  Prepared out;
  if (ps.kind == "masked_linear") out.predictor = train_masked_linear(train_std, ps.linear);
  else if (ps.kind == "knn") out.predictor = knn_predictor(reference, ps.k);
  else if (ps.kind == "table") out.predictor = predictor_table(ps.table, reference);
  else if (ps.kind == "cube_ground_truth") out.predictor = cube_ground_truth(ds.sigma, params);
  else out.predictor = load_predictor(ps.path);
  if (out.predictor->num_features() != data.dim()) throw ConfigError("predictor dimension does not match the data");
  out.train = std::make_shared<const Dataset>(std::move(reference));
  out.index = std::make_shared<const NeighborIndex>(out.train->features);
  out.test = std::move(test);
  return out;
}

struct PolicyHandle {
  PolicyPtr policy;
  std::shared_ptr<const CheatingPolicy> cheating;
};

PolicyHandle make_policy(const PolicySpec& spec, double alpha, std::optional<std::size_t> budget, const Prepared& p,
                         const ExperimentConfig& config, const CostModel& cost) {
  PolicyHandle h;
  if (spec.kind == "aaco") {
    AacoConfig ac = spec.aaco;
    ac.alpha = alpha;
    ac.loss = config.loss;
    h.policy = std::make_shared<AacoPolicy>(p.train, p.index, p.predictor, cost, ac);
  } else if (spec.kind == "random") {
    h.policy = std::make_shared<RandomPolicy>(*budget);
  } else if (spec.kind == "fixed_order") {
    std::vector<int> order = spec.order;
    if (budget) order.resize(std::min(order.size(), *budget));
    h.policy = std::make_shared<FixedOrderPolicy>(std::move(order));
  } else if (spec.kind == "greedy_cheating") {
    h.cheating = std::make_shared<GreedyCheatingPolicy>(p.predictor, cost, alpha, config.loss, spec.initial_feature);
  } else if (spec.kind == "nongreedy_cheating") {
    h.cheating = std::make_shared<NonGreedyCheatingPolicy>(p.predictor, cost, alpha, config.loss,
                                                           spec.aaco.candidate_budget, spec.initial_feature);
  } else {
    h.policy = std::make_shared<StudentPolicy>(load_student(spec.student_path));
  }
  return h;
}

}  // namespace

Report run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Prepared p = prepare(config);
  const std::size_t d = p.test.dim();
  const CostModel cost(d);
  Report report;
  report.feature_names = p.test.feature_names;
  report.task = p.test.task;

  for (const auto& spec : config.policies) {
    std::vector<std::pair<double, std::optional<std::size_t>>> points;
    if (!spec.budgets.empty()) {
      for (auto b : spec.budgets) points.emplace_back(config.alphas.front(), b);
    } else {
      for (double a : config.alphas) points.emplace_back(a, std::nullopt);
    }
    for (const auto& [alpha, budget] : points) {
      const auto start = std::chrono::steady_clock::now();
      const PolicyHandle h = make_policy(spec, alpha, budget, p, config, cost);
      RolloutOptions ro;
      ro.alpha = alpha;
      ro.loss = config.loss;
      ro.seed = config.seed;
      std::vector<RollOutTrace> traces(p.test.size());
      parallel_for(p.test.size(), config.threads, [&](std::size_t i) {
        try {
          std::vector<double> raw;
          const Episode ep = make_episode(p.test, i, raw);
          traces[i] = h.policy ? rollout(*h.policy, ep, *p.predictor, cost, ro)
                               : rollout(*h.cheating, ep, *p.predictor, cost, ro);
        } catch (const std::exception& e) {
          throw Error("policy '" + spec.name + "' alpha " + fmt(alpha) + " instance " + std::to_string(i) + ": " +
                      e.what());
        }
      });
      ReportRow row = aggregate(spec.name, alpha, traces, d, p.test.task, p.test.num_classes);
      row.budget = budget;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (config.keep_traces) row.traces = std::move(traces);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

json nan_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double null_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

std::vector<std::pair<std::string, double>> row_metrics(const ReportRow& r) {
  std::vector<std::pair<std::string, double>> m;
  if (r.budget) m.emplace_back("budget", static_cast<double>(*r.budget));
  m.emplace_back("instances", static_cast<double>(r.instances));
  if (!std::isnan(r.accuracy)) m.emplace_back("accuracy", r.accuracy);
  if (!std::isnan(r.mse)) m.emplace_back("mse", r.mse);
  m.emplace_back("mean_loss", r.mean_loss);
  m.emplace_back("mean_acquisitions", r.mean_acquisitions);
  m.emplace_back("mean_cost", r.mean_cost);
  m.emplace_back("mean_return", r.mean_return);
  return m;
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return out;
}

}  // namespace

json report_to_json(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"policy", r.policy},
                        {"alpha", r.alpha},
                        {"budget", r.budget ? json(*r.budget) : json(nullptr)},
                        {"instances", r.instances},
                        {"accuracy", nan_null(r.accuracy)},
                        {"mse", nan_null(r.mse)},
                        {"mean_loss", r.mean_loss},
                        {"mean_acquisitions", r.mean_acquisitions},
                        {"mean_cost", r.mean_cost},
                        {"mean_return", r.mean_return},
                        {"histogram", r.histogram},
                        {"feature_frequency", r.feature_frequency}});
  }
  return json{{"feature_names", report.feature_names}, {"task", to_string(report.task)}, {"rows", rows}};
}

Report report_from_json(const json& j) {
  Report report;
  try {
    report.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    report.task = parse_task_kind(j.at("task").get<std::string>());
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.policy = r.at("policy").get<std::string>();
      row.alpha = r.at("alpha").get<double>();
      if (!r.at("budget").is_null()) row.budget = r.at("budget").get<std::size_t>();
      row.instances = r.at("instances").get<std::size_t>();
      row.accuracy = null_nan(r.at("accuracy"));
      row.mse = null_nan(r.at("mse"));
      row.mean_loss = r.at("mean_loss").get<double>();
      row.mean_acquisitions = r.at("mean_acquisitions").get<double>();
      row.mean_cost = r.at("mean_cost").get<double>();
      row.mean_return = r.at("mean_return").get<double>();
      row.histogram = r.at("histogram").get<std::vector<std::vector<double>>>();
      row.feature_frequency = r.at("feature_frequency").get<std::vector<double>>();
      report.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir, bool write_timing) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto csv = open("report.csv");
    csv << "policy,alpha,metric,value\n";
    for (const auto& r : report.rows)
      for (const auto& [name, value] : row_metrics(r)) csv << r.policy << ',' << fmt(r.alpha) << ',' << name << ','
                                                           << fmt(value) << '\n';
  }
  open("report.json") << report_to_json(report).dump(2) << '\n';

  std::vector<std::string> policies;
  for (const auto& r : report.rows)
    if (std::find(policies.begin(), policies.end(), r.policy) == policies.end()) policies.push_back(r.policy);
  for (const auto& name : policies) {
    std::vector<const ReportRow*> rows;
    for (const auto& r : report.rows)
      if (r.policy == name) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ReportRow* a, const ReportRow* b) { return a->mean_acquisitions < b->mean_acquisitions; });
    auto dat = open("plot_" + safe_name(name) + ".dat");
    dat << "# mean_acquisitions " << (report.task == TaskKind::kClassification ? "accuracy" : "mse") << " alpha\n";
    for (const auto* r : rows)
      dat << fmt(r->mean_acquisitions) << ' '
          << fmt(report.task == TaskKind::kClassification ? r->accuracy : r->mse) << ' ' << fmt(r->alpha) << '\n';
  }
  if (!write_timing) return;
  json timing = json::array();
  for (const auto& r : report.rows)
    timing.push_back(json{{"policy", r.policy}, {"alpha", r.alpha}, {"seconds", r.seconds}});
  open("timing.json") << timing.dump(2) << '\n';
}

double matched_accuracy(std::vector<CurvePoint> curve, double budget) {
  if (curve.empty()) throw Error("matched accuracy of an empty curve");
  std::stable_sort(curve.begin(), curve.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.acquisitions < b.acquisitions || (a.acquisitions == b.acquisitions && a.accuracy < b.accuracy);
  });
  for (std::size_t t = 1; t < curve.size(); ++t) curve[t].accuracy = std::max(curve[t].accuracy, curve[t - 1].accuracy);
  // Equal acquisition counts keep their best point.
  std::vector<CurvePoint> merged;
  for (const auto& p : curve) {
    if (!merged.empty() && merged.back().acquisitions == p.acquisitions) merged.back() = p;
    else merged.push_back(p);
  }
  curve = std::move(merged);
  if (budget <= curve.front().acquisitions) return curve.front().accuracy;
  if (budget >= curve.back().acquisitions) return curve.back().accuracy;
  std::size_t t = 1;
  while (curve[t].acquisitions < budget) ++t;
  const auto& a = curve[t - 1];
  const auto& b = curve[t];
  if (b.acquisitions == a.acquisitions) return b.accuracy;
  const double w = (budget - a.acquisitions) / (b.acquisitions - a.acquisitions);
  return a.accuracy + w * (b.accuracy - a.accuracy);
}

std::vector<CurvePoint> curve_of(const Report& report, const std::string& policy) {
  std::vector<CurvePoint> out;
  for (const auto& r : report.rows)
    if (r.policy == policy) out.push_back({r.mean_acquisitions, r.accuracy});
  if (out.empty()) throw Error("report has no rows for policy '" + policy + "'");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

void print_prediction(std::ostream& out, const Prediction& p) {
  if (p.task == TaskKind::kRegression) {
    out << "prediction: " << fmt(p.value) << '\n';
    return;
  }
  out << "prediction: class " << p.argmax() << "  [";
  for (std::size_t c = 0; c < p.probs.size(); ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.4f", c ? " " : "", p.probs[c]);
    out << buf;
  }
  out << "]\n";
}

}  // namespace

RollOutTrace interactive_session(const Predictor& predictor, const Policy& policy, const CostModel& cost,
                                 const InteractiveOptions& options, std::istream& in, std::ostream& out) {
  const std::size_t d = predictor.num_features();
  std::vector<std::string> names = options.feature_names;
  if (names.empty()) names = default_feature_names(d);
  if (names.size() != d) throw ConfigError("feature name count does not match the predictor");
  std::vector<std::string> inputs;

  const NextFn next = [&](const ObservationState& s, StepContext& ctx) {
    print_prediction(out, predictor.predict(s.input()));
    return policy.decide(s, ctx);
  };
  const RevealFn reveal = [&](int j, const Decision& dec, const ObservationState&) {
    const auto& name = names[static_cast<std::size_t>(j)];
    out << "next feature: " << name << " (index " << j << ")";
    if (!std::isnan(dec.objective)) out << "  objective " << fmt(dec.objective);
    if (dec.chosen.size() > 1) out << "  subset " << dec.chosen.to_string();
    out << '\n';
    std::string line;
    while (true) {
      out << name << " = " << std::flush;
      if (!std::getline(in, line)) return std::optional<std::pair<double, double>>();
      std::string text = trim(line);
      inputs.push_back(text);
      if (text == "predict") return std::optional<std::pair<double, double>>();
      if (const auto eq = text.find('='); eq != std::string::npos) {
        const std::string given = trim(text.substr(0, eq));
        if (given != name) {
          out << "'" << given << "' is not the requested feature " << name << '\n';
          continue;
        }
        text = trim(text.substr(eq + 1));
      }
      const auto v = parse_number(text);
      if (!v) {
        out << "could not parse '" << text << "' as a number\n";
        continue;
      }
      const double z = options.standardization ? options.standardization->apply(static_cast<std::size_t>(j), *v) : *v;
      return std::optional<std::pair<double, double>>(std::in_place, *v, z);
    }
  };

  RollOutTrace trace = rollout_core(next, reveal, d, 0, std::nullopt, std::nullopt, &predictor, cost,
                                    options.rollout);
  out << "final ";
  print_prediction(out, trace.prediction);
  if (options.transcript) {
    std::ofstream log(*options.transcript, std::ios::app);
    if (!log) throw Error("cannot append to " + options.transcript->string());
    log << json{{"inputs", inputs}, {"trace", trace_to_json(trace)}}.dump() << '\n';
  }
  return trace;
}

Transcript read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line, last;
  while (std::getline(in, line))
    if (!trim(line).empty()) last = line;
  if (last.empty()) throw ConfigError(path.string() + ": empty transcript");
  try {
    const json j = json::parse(last);
    return Transcript{j.at("inputs").get<std::vector<std::string>>(), trace_from_json(j.at("trace"))};
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RollOutTrace replay_transcript(const Transcript& transcript, const Predictor& predictor, const Policy& policy,
                               const CostModel& cost, InteractiveOptions options) {
  std::ostringstream script;
  for (const auto& s : transcript.inputs) script << s << '\n';
  std::istringstream in(script.str());
  std::ostringstream sink;
  options.transcript.reset();
  return interactive_session(predictor, policy, cost, options, in, sink);
}

}  // namespace afa
