// Command-line front end: data generation, training, sweeps, imitation,
// decision-making and the interactive session.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "afa/decide.hpp"
#include "afa/harness.hpp"
#include "afa/imitation.hpp"
#include "afa/parallel.hpp"

using nlohmann::json;
using namespace afa;

namespace {

struct ModelArtifact {
  PredictorPtr predictor;
  std::optional<StandardizationParams> standardization;
  std::vector<std::string> feature_names;
  std::string label_column = "label";
  TaskKind task = TaskKind::kClassification;
};

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ModelArtifact load_model(const std::filesystem::path& path) {
  const json j = read_json(path);
  ModelArtifact m;
  try {
    m.predictor = predictor_from_json(j);
    if (j.contains("standardization")) m.standardization = standardization_from_json(j.at("standardization"));
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    m.label_column = j.value("label_column", m.label_column);
    m.task = m.predictor->task();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return m;
}

Dataset load_standardized(const std::filesystem::path& csv, const ModelArtifact& m) {
  Dataset raw = load_csv(csv, m.label_column, m.task);
  if (raw.dim() != m.predictor->num_features()) throw ConfigError(csv.string() + ": column count does not match model");
  if (!m.standardization) return raw;
  return apply_standardization(raw, *m.standardization);
}

AacoConfig aaco_from_flags(double alpha, std::size_t k, std::size_t budget, int initial, std::uint64_t seed) {
  AacoConfig c;
  c.alpha = alpha;
  c.k = k;
  c.candidate_budget = budget;
  c.seed = seed;
  c.initial = initial >= 0 ? InitialFeatureRule::fixed(initial) : InitialFeatureRule::empty_neighbor_fallback();
  return c;
}

void print_row(const ReportRow& r, TaskKind task) {
  std::printf("%-20s alpha=%-10g %s=%.4f acquisitions=%.3f cost=%.3f return=%.4f\n", r.policy.c_str(), r.alpha,
              task == TaskKind::kClassification ? "accuracy" : "mse",
              task == TaskKind::kClassification ? r.accuracy : r.mse, r.mean_acquisitions, r.mean_cost,
              r.mean_return);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active feature acquisition with nearest-neighbor oracles"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
  std::string gen_kind = "cube", gen_out;
  std::size_t gen_n = 1000, gen_d = 11;
  double gen_sigma = 0.3;
  std::uint64_t gen_seed = 0;
  bool gen_randomized = false;
  gen->add_option("--dataset", gen_kind, "cube | guide | decision")
      ->check(CLI::IsMember({"cube", "guide", "decision"}));
  gen->add_option("--n", gen_n, "Rows")->check(CLI::PositiveNumber);
  gen->add_option("--sigma", gen_sigma, "CUBE noise level")->check(CLI::PositiveNumber);
  gen->add_option("--d", gen_d, "Guide dataset dimension");
  gen->add_option("--seed", gen_seed);
  gen->add_flag("--randomized", gen_randomized, "Decision env: randomized treatment");
  gen->add_option("--out", gen_out, "Output CSV")->required();

  // train-predictor
  auto* tp = app.add_subcommand("train-predictor", "Fit an arbitrary-subset predictor");
  std::string tp_data, tp_out, tp_label = "label", tp_task = "classification", tp_kind = "masked_linear";
  std::size_t tp_k = 10;
  MaskedLinearConfig tp_linear;
  tp->add_option("--data", tp_data, "Training CSV")->required();
  tp->add_option("--label", tp_label, "Label column");
  tp->add_option("--task", tp_task)->check(CLI::IsMember({"classification", "regression"}));
  tp->add_option("--kind", tp_kind)->check(CLI::IsMember({"masked_linear", "knn"}));
  tp->add_option("--k", tp_k, "Neighbors (knn)");
  tp->add_option("--epochs", tp_linear.epochs);
  tp->add_option("--step-size", tp_linear.step_size);
  tp->add_option("--batch-size", tp_linear.batch_size, "0 = full batch");
  tp->add_option("--l2", tp_linear.l2);
  tp->add_option("--seed", tp_linear.seed);
  tp->add_option("--out", tp_out, "Model JSON")->required();

  // run-afa
  auto* run = app.add_subcommand("run-afa", "Run an alpha sweep from a JSON config");
  std::string run_config, run_out;
  std::size_t run_threads = 0;
  run->add_option("--config", run_config)->required();
  run->add_option("--out", run_out, "Report directory (overrides output_dir)");
  run->add_option("--threads", run_threads);

  // bc-collect
  auto* bcc = app.add_subcommand("bc-collect", "Roll out a teacher and record (state, action) examples");
  std::string bcc_data, bcc_train, bcc_model, bcc_teacher = "aaco", bcc_out, bcc_traces;
  double bcc_alpha = 0.1;
  std::size_t bcc_k = 20, bcc_budget = 2000, bcc_threads = 0;
  int bcc_initial = -1;
  std::uint64_t bcc_seed = 0;
  bcc->add_option("--data", bcc_data, "Rows to roll out on (CSV)")->required();
  bcc->add_option("--train", bcc_train, "Neighbor reference set (CSV, AACO teacher)");
  bcc->add_option("--model", bcc_model, "Predictor JSON")->required();
  bcc->add_option("--teacher", bcc_teacher)->check(CLI::IsMember({"aaco", "greedy_cheating"}));
  bcc->add_option("--alpha", bcc_alpha);
  bcc->add_option("--k", bcc_k);
  bcc->add_option("--candidates", bcc_budget);
  bcc->add_option("--initial", bcc_initial, "Forced first feature (-1 = none)");
  bcc->add_option("--seed", bcc_seed);
  bcc->add_option("--threads", bcc_threads);
  bcc->add_option("--out", bcc_out, "Examples JSONL")->required();
  bcc->add_option("--traces", bcc_traces, "Also write traces JSONL");

  // bc-train
  auto* bct = app.add_subcommand("bc-train", "Train a student policy on examples");
  std::string bct_examples, bct_out;
  BcConfig bct_config;
  bct->add_option("--examples", bct_examples)->required();
  bct->add_option("--epochs", bct_config.epochs);
  bct->add_option("--step-size", bct_config.step_size);
  bct->add_option("--l2", bct_config.l2);
  bct->add_flag("--interactions", bct_config.interactions);
  bct->add_option("--seed", bct_config.seed);
  bct->add_option("--out", bct_out, "Student JSON")->required();

  // bc-eval
  auto* bce = app.add_subcommand("bc-eval", "Score a student against examples or by roll-out");
  std::string bce_student, bce_examples, bce_data, bce_model;
  double bce_alpha = 0.0;
  bce->add_option("--student", bce_student)->required();
  bce->add_option("--examples", bce_examples, "Held-out teacher examples");
  bce->add_option("--data", bce_data, "Test CSV for roll-out metrics");
  bce->add_option("--model", bce_model, "Predictor JSON (with --data)");
  bce->add_option("--alpha", bce_alpha, "Cost weight in the reported return");

  // decide
  auto* dec = app.add_subcommand("decide", "Acquire features for a binary decision");
  std::string dec_data, dec_action = "action", dec_reward = "reward", dec_out;
  std::vector<std::string> dec_context;
  std::size_t dec_synthetic = 0, dec_qk = 100, dec_pk = 50, dec_k = 20, dec_max_test = 1000;
  double dec_alpha = 0.03, dec_test = 0.1;
  int dec_initial = -1;
  std::uint64_t dec_seed = 0;
  bool dec_randomized = true;
  dec->add_option("--data", dec_data, "Logged bandit CSV");
  dec->add_option("--context", dec_context, "Context columns (default: all others)");
  dec->add_option("--action-column", dec_action);
  dec->add_option("--reward-column", dec_reward);
  dec->add_option("--synthetic", dec_synthetic, "Generate the synthetic environment with N rows instead");
  dec->add_option("--randomized", dec_randomized, "Synthetic: randomized treatment");
  dec->add_option("--alpha", dec_alpha);
  dec->add_option("--q-k", dec_qk, "Neighbors of the outcome model");
  dec->add_option("--policy-k", dec_pk, "Neighbors of the partial policy");
  dec->add_option("--k", dec_k, "Neighbors of the acquisition search");
  dec->add_option("--initial", dec_initial, "Forced first feature (-1 = none)");
  dec->add_option("--test-fraction", dec_test);
  dec->add_option("--max-test", dec_max_test, "Evaluated test rows (0 = all)");
  dec->add_option("--seed", dec_seed);
  dec->add_option("--out", dec_out, "Summary JSON");

  // interactive
  auto* inter = app.add_subcommand("interactive", "Acquire features for one instance from the terminal");
  std::string in_model, in_train, in_log;
  double in_alpha = 0.1;
  std::size_t in_k = 20, in_budget = 2000;
  int in_initial = -1;
  std::uint64_t in_seed = 0;
  inter->add_option("--model", in_model)->required();
  inter->add_option("--train", in_train, "Neighbor reference set (CSV)")->required();
  inter->add_option("--alpha", in_alpha);
  inter->add_option("--k", in_k);
  inter->add_option("--candidates", in_budget);
  inter->add_option("--initial", in_initial);
  inter->add_option("--seed", in_seed);
  inter->add_option("--log", in_log, "Transcript JSONL (appended)");

  // report
  auto* rep = app.add_subcommand("report", "Print (and optionally rewrite) a saved report");
  std::string rep_dir;
  bool rep_rewrite = false;
  rep->add_option("--dir", rep_dir)->required();
  rep->add_flag("--rewrite", rep_rewrite, "Regenerate CSV and plot files from report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      if (gen_kind == "cube") {
        CubeConfig c;
        c.n = gen_n;
        c.sigma = gen_sigma;
        c.seed = gen_seed;
        write_csv(generate_cube(c), gen_out);
      } else if (gen_kind == "guide") {
        write_csv(generate_guide(gen_n, gen_d, gen_seed), gen_out);
      } else {
        DecisionEnvConfig c;
        c.n = gen_n;
        c.seed = gen_seed;
        c.randomized_treatment = gen_randomized;
        write_bandit_csv(generate_decision_env(c), gen_out);
      }
    } else if (*tp) {
      const TaskKind task = parse_task_kind(tp_task);
      Dataset raw = load_csv(tp_data, tp_label, task);
      raw.validate();
      auto [train, params] = standardize(raw);
      PredictorPtr model;
      if (tp_kind == "knn") model = knn_predictor(train, tp_k);
      else model = train_masked_linear(train, tp_linear);
      json j = model->to_json();
      j["standardization"] = standardization_to_json(params);
      j["feature_names"] = train.feature_names;
      j["label_column"] = tp_label;
      std::ofstream out(tp_out);
      if (!out) throw Error("cannot write " + tp_out);
      out << j.dump() << '\n';
    } else if (*run) {
      ExperimentConfig config = load_experiment_config(run_config);
      if (run_threads) config.threads = run_threads;
      if (!run_out.empty()) config.output_dir = run_out;
      const Report report = run_experiment(config);
      for (const auto& r : report.rows) print_row(r, report.task);
      if (!config.output_dir.empty()) write_report(report, config.output_dir);
    } else if (*bcc) {
      const ModelArtifact m = load_model(bcc_model);
      const Dataset rows = load_standardized(bcc_data, m);
      RolloutOptions ro;
      ro.alpha = bcc_alpha;
      ro.seed = bcc_seed;
      const CostModel cost(rows.dim());
      BcCollection col;
      if (bcc_teacher == "aaco") {
        if (bcc_train.empty()) throw ConfigError("the AACO teacher needs --train");
        auto train = std::make_shared<const Dataset>(load_standardized(bcc_train, m));
        auto index = std::make_shared<const NeighborIndex>(train->features);
        AacoPolicy teacher(train, index, m.predictor, cost,
                           aaco_from_flags(bcc_alpha, bcc_k, bcc_budget, bcc_initial, bcc_seed));
        col = collect_traces(teacher, rows, *m.predictor, cost, ro, bcc_threads);
      } else {
        std::optional<int> initial;
        if (bcc_initial >= 0) initial = bcc_initial;
        GreedyCheatingPolicy teacher(m.predictor, cost, bcc_alpha, LossKind::kCrossEntropy, initial);
        col = collect_traces(teacher, rows, *m.predictor, cost, ro, bcc_threads);
      }
      write_examples_jsonl(col.examples, bcc_out);
      if (!bcc_traces.empty()) write_traces_jsonl(col.traces, bcc_traces);
      std::printf("%zu traces, %zu examples\n", col.traces.size(), col.examples.size());
    } else if (*bct) {
      const auto examples = read_examples_jsonl(bct_examples);
      if (examples.empty()) throw ConfigError(bct_examples + ": no examples");
      const auto result = train_bc(examples, examples.front().dim, bct_config);
      save_student(result.student, bct_out);
      std::printf("training agreement %.4f\n", agreement(result.student, examples));
    } else if (*bce) {
      const StudentPolicy student = load_student(bce_student);
      if (!bce_examples.empty())
        std::printf("agreement %.4f\n", agreement(student, read_examples_jsonl(bce_examples)));
      if (!bce_data.empty()) {
        if (bce_model.empty()) throw ConfigError("--data needs --model");
        const ModelArtifact m = load_model(bce_model);
        const Dataset test = load_standardized(bce_data, m);
        const CostModel cost(test.dim());
        RolloutOptions ro;
        ro.alpha = bce_alpha;
        std::vector<RollOutTrace> traces(test.size());
        parallel_for(test.size(), 0, [&](std::size_t i) {
          std::vector<double> raw;
          traces[i] = rollout(student, make_episode(test, i, raw), *m.predictor, cost, ro);
        });
        print_row(aggregate("bc_student", bce_alpha, traces, test.dim(), test.task, test.num_classes), test.task);
      }
      if (bce_examples.empty() && bce_data.empty()) throw ConfigError("bc-eval needs --examples or --data");
    } else if (*dec) {
      DecisionDataset data;
      if (dec_synthetic) {
        DecisionEnvConfig c;
        c.n = dec_synthetic;
        c.seed = dec_seed;
        c.randomized_treatment = dec_randomized;
        data = generate_decision_env(c);
      } else {
        if (dec_data.empty()) throw ConfigError("decide needs --data or --synthetic");
        data = load_bandit_csv(dec_data, BanditSchema{dec_context, dec_action, dec_reward});
      }
      const DecisionSplit parts = split_decision(data, 1.0 - dec_test, dec_seed);
      auto train = std::make_shared<const DecisionProblem>(make_decision_problem(parts.train));
      DecisionDataset test_raw = parts.test;
      if (dec_max_test && test_raw.size() > dec_max_test) {
        std::vector<std::size_t> rows(dec_max_test);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        test_raw = subset_rows(test_raw, rows);
      }
      const DecisionProblem test = make_decision_problem(test_raw, train->standardization);
      QModelConfig qc;
      qc.k = dec_qk;
      auto q = fit_q(*train, qc);
      auto index = std::make_shared<const NeighborIndex>(train->x_std);
      const auto q_train = full_q_table(*q, *train, true);
      auto policy = std::make_shared<WeightedKnnPolicy>(index, regret_costs(q_train), dec_pk);
      const CostModel cost(train->dim());
      DecisionAacoPolicy acq(train, index, q_train, policy, cost,
                             aaco_from_flags(dec_alpha, dec_k, 10000, dec_initial, dec_seed));
      RolloutOptions ro;
      ro.alpha = dec_alpha;
      ro.seed = dec_seed;
      const auto outcomes = decision_rollouts(acq, *policy, test, cost, ro);
      std::vector<int> actions;
      double acquisitions = 0.0;
      for (const auto& o : outcomes) {
        actions.push_back(o.action);
        acquisitions += static_cast<double>(o.trace.acquisitions());
      }
      acquisitions /= static_cast<double>(outcomes.size());
      const auto full_actions =
          fixed_subset_actions(*full_policy(q), test, FeatureSet::range(0, static_cast<int>(test.dim())));
      const auto q_test = full_q_table(*q, test, false);
      json summary{{"alpha", dec_alpha},
                   {"test_rows", test.size()},
                   {"mean_acquisitions", acquisitions},
                   {"estimated_value", estimate_value(actions, q_test)},
                   {"full_policy_value", estimate_value(full_actions, q_test)},
                   {"agreement_with_full_policy", agreement(actions, full_actions)}};
      if (test.truth && test.dim() == 4) {
        const ExactDecisionQ exact;
        const auto q_exact = full_q_table(exact, test, false);
        std::vector<int> best;
        for (const auto& t : *test.truth) best.push_back(t.optimal_action);
        summary["true_value"] = estimate_value(actions, q_exact);
        summary["optimal_value"] = estimate_value(best, q_exact);
        summary["optimal_rate"] = optimal_rate(actions, *test.truth);
      }
      std::printf("%s\n", summary.dump(2).c_str());
      if (!dec_out.empty()) {
        std::ofstream out(dec_out);
        if (!out) throw Error("cannot write " + dec_out);
        out << summary.dump(2) << '\n';
      }
    } else if (*inter) {
      const ModelArtifact m = load_model(in_model);
      auto train = std::make_shared<const Dataset>(load_standardized(in_train, m));
      auto index = std::make_shared<const NeighborIndex>(train->features);
      const CostModel cost(train->dim());
      AacoPolicy policy(train, index, m.predictor, cost, aaco_from_flags(in_alpha, in_k, in_budget, in_initial, in_seed));
      InteractiveOptions opts;
      opts.feature_names = m.feature_names;
      opts.standardization = m.standardization;
      opts.rollout.alpha = in_alpha;
      opts.rollout.seed = in_seed;
      if (!in_log.empty()) opts.transcript = in_log;
      interactive_session(*m.predictor, policy, cost, opts, std::cin, std::cout);
    } else if (*rep) {
      const Report report = report_from_json(read_json(std::filesystem::path(rep_dir) / "report.json"));
      for (const auto& r : report.rows) print_row(r, report.task);
      if (rep_rewrite) write_report(report, rep_dir, false);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
