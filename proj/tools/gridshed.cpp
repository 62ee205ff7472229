#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridshed/classifier.hpp"
#include "gridshed/errors.hpp"
#include "gridshed/pipeline.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/sac.hpp"
#include "gridshed/swing.hpp"
#include "gridshed/util.hpp"

using namespace gridshed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json data_manifest(const fs::path& dir) { return json::parse(read_file(dir / "manifest.json")); }

/// Case for a dataset: an explicit --case wins, else the one recorded at gen-data time.
Network case_for(const std::string& case_ref, const fs::path& data_dir) {
  std::string ref = case_ref;
  if (ref.empty()) ref = data_manifest(data_dir).value("case_path", std::string());
  if (ref.empty()) throw InvalidInput("dataset manifest names no case; pass --case");
  return solved(load_network(resolve_case(ref)));
}

std::vector<Contingency> contingencies_for(const std::string& ref, const fs::path& data_dir) {
  std::string r = ref;
  if (r.empty() && !data_dir.empty()) r = data_manifest(data_dir).value("contingencies_path", std::string());
  if (r.empty()) throw InvalidInput("no contingency set; pass --contingencies");
  return load_contingencies(resolve_contingencies(r));
}

std::shared_ptr<const Classifier> model_for(const std::string& kind, const std::string& dir) {
  if (kind == "tds") return nullptr;
  if (dir.empty()) throw InvalidInput("backend '" + kind + "' needs --fsa-model DIR");
  return load_classifier(dir);
}

MaskMode mask_mode(const std::string& s) {
  if (s == "zero_raw") return MaskMode::ZeroRaw;
  if (s == "zero_standardized") return MaskMode::ZeroStandardized;
  throw InvalidInput("unknown mask mode '" + s + "'");
}

// A failure inside a subcommand is reported with the stage name.
struct Failure {
  std::string stage;
  std::string what;
};

template <typename F>
void guarded(const std::string& stage, F&& fn) {
  try {
    fn();
  } catch (const StageError& e) {
    throw Failure{e.stage(), e.what()};
  } catch (const std::exception& e) {
    throw Failure{stage, e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridshed: frequency-security workbench"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "sample and label operating points");
  std::string g_case, g_cont, g_out;
  int g_n = 0;
  std::uint64_t g_seed = 0;
  gen->add_option("--case", g_case, "case file or bundled case name")->required();
  gen->add_option("--contingencies", g_cont, "contingency file or bundled set name")->required();
  gen->add_option("--n", g_n, "number of operating points")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", g_seed, "seed")->required();
  gen->add_option("--out", g_out, "output directory")->required();

  // train-fsa
  auto* tf = app.add_subcommand("train-fsa", "train one FSA classifier");
  std::string f_model, f_data, f_out, f_case;
  std::uint64_t f_seed = 0;
  ClassifierTrainOptions f_opts;
  tf->add_option("--model", f_model, "dt, svm, mlp, cnn or gnn")->required()
      ->check(CLI::IsMember({"dt", "svm", "mlp", "cnn", "gnn"}));
  tf->add_option("--data", f_data, "dataset directory")->required();
  tf->add_option("--seed", f_seed, "seed")->required();
  tf->add_option("--out", f_out, "checkpoint directory")->required();
  tf->add_option("--case", f_case, "case for the GNN topology (default: from the dataset)");
  tf->add_option("--epochs", f_opts.epochs, "epochs for neural models")->capture_default_str();
  tf->add_option("--lr", f_opts.lr, "Adam learning rate")->capture_default_str();

  // train-agent
  auto* ta = app.add_subcommand("train-agent", "train a SAC load-shedding agent");
  std::string a_case, a_fsa, a_data, a_out, a_cont, a_model, a_log;
  double a_lambda = 0.0;
  int a_episodes = 0, a_eval_points = 100, a_eval_interval = 100, a_shed = 7;
  std::uint64_t a_seed = 0;
  SacConfig a_sac = desk_sac();
  ta->add_option("--case", a_case, "case file (default: from the dataset)");
  ta->add_option("--fsa", a_fsa, "tds, dt, svm, mlp, cnn or gnn")->required()
      ->check(CLI::IsMember({"tds", "dt", "svm", "mlp", "cnn", "gnn"}));
  ta->add_option("--lambda", a_lambda, "constraint weight")->required();
  ta->add_option("--episodes", a_episodes, "training episodes")->required();
  ta->add_option("--seed", a_seed, "seed")->required();
  ta->add_option("--out", a_out, "agent directory")->required();
  ta->add_option("--data", a_data, "labeled dataset supplying the unsafe points")->required();
  ta->add_option("--contingencies", a_cont, "contingency set (default: from the dataset)");
  ta->add_option("--fsa-model", a_model, "classifier checkpoint for surrogate backends");
  ta->add_option("--eval-points", a_eval_points, "size of the fixed unsafe evaluation set")->capture_default_str();
  ta->add_option("--eval-interval", a_eval_interval, "episodes between evaluations")->capture_default_str();
  ta->add_option("--shed-count", a_shed, "number of shed buses")->capture_default_str();
  ta->add_option("--actor-lr", a_sac.actor_lr, "actor learning rate")->capture_default_str();
  ta->add_option("--critic-lr", a_sac.critic_lr, "critic learning rate")->capture_default_str();
  ta->add_option("--alpha", a_sac.alpha, "entropy temperature")->capture_default_str();
  ta->add_option("--log", a_log, "write every transition to this CSV");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "safety of a trained agent on the unsafe evaluation set");
  std::string e_agent, e_data, e_fsa, e_model, e_case, e_cont, e_mode = "zero_standardized";
  int e_points = 100;
  double e_mask = 0.0;
  std::uint64_t e_mask_seed = 0;
  ev->add_option("--agent", e_agent, "agent directory")->required();
  ev->add_option("--data", e_data, "labeled dataset")->required();
  ev->add_option("--fsa", e_fsa, "tds or a classifier kind")->required()
      ->check(CLI::IsMember({"tds", "dt", "svm", "mlp", "cnn", "gnn"}));
  ev->add_option("--fsa-model", e_model, "classifier checkpoint for surrogate backends");
  ev->add_option("--case", e_case, "case file (default: from the dataset)");
  ev->add_option("--contingencies", e_cont, "contingency set (default: from the dataset)");
  ev->add_option("--eval-points", e_points, "number of unsafe points")->capture_default_str();
  ev->add_option("--mask", e_mask, "fraction of buses masked per query")->capture_default_str();
  ev->add_option("--mask-seed", e_mask_seed, "seed for bus masking")->capture_default_str();
  ev->add_option("--mask-mode", e_mode, "zero_raw or zero_standardized")->capture_default_str();

  // compare-backends
  auto* cb = app.add_subcommand("compare-backends", "agents trained on different backends, tested on TDS");
  std::string c_data, c_case, c_cont, c_out;
  std::vector<std::string> c_entries;
  int c_points = 100;
  cb->add_option("--data", c_data, "labeled dataset")->required();
  cb->add_option("--entry", c_entries,
                 "backend=AGENT_DIR[,MODEL_DIR]; the agent's report.csv supplies the train time")
      ->required();
  cb->add_option("--case", c_case, "case file (default: from the dataset)");
  cb->add_option("--contingencies", c_cont, "contingency set (default: from the dataset)");
  cb->add_option("--eval-points", c_points, "number of unsafe points")->capture_default_str();
  cb->add_option("--out", c_out, "also write the CSV here");

  // run-pipeline
  auto* rp = app.add_subcommand("run-pipeline", "full experiment from a JSON config");
  std::string p_config;
  rp->add_option("--config", p_config, "experiment config")->required()->check(CLI::ExistingFile);

  // replay-trajectory
  auto* rt = app.add_subcommand("replay-trajectory", "frequency trajectory or agent episode as CSV");
  std::string r_case, r_cont, r_out, r_agent, r_data, r_fsa = "tds", r_model;
  int r_id = 0, r_stride = 10, r_row = 0;
  rt->add_option("--case", r_case, "case file or bundled name");
  rt->add_option("--contingencies", r_cont, "contingency set");
  rt->add_option("--id", r_id, "contingency id to simulate")->capture_default_str();
  rt->add_option("--stride", r_stride, "keep every n-th integration step")->capture_default_str();
  rt->add_option("--agent", r_agent, "replay this agent's episode instead of a trajectory");
  rt->add_option("--data", r_data, "labeled dataset (with --agent)");
  rt->add_option("--row", r_row, "index among the unsafe evaluation points (with --agent)")->capture_default_str();
  rt->add_option("--fsa", r_fsa, "backend judging each step (with --agent)")->capture_default_str();
  rt->add_option("--fsa-model", r_model, "classifier checkpoint for surrogate backends");
  rt->add_option("--out", r_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      guarded("gen-data", [&] {
        const fs::path case_path = resolve_case(g_case);
        const fs::path cont_path = resolve_contingencies(g_cont);
        const Network base = solved(load_network(case_path));
        const auto set = load_contingencies(cont_path);
        GenerateOptions opts;
        const int every = std::max(1, g_n / 10);
        opts.progress = [&](int done, int total) {
          if (done % every == 0 || done == total) std::cerr << "gen-data: " << done << "/" << total << "\n";
        };
        Stopwatch sw;
        LabeledDataset ds = generate_dataset(base, set, g_n, g_seed, opts);
        split_dataset(ds, derive_seed(g_seed, "split"));
        const double seconds = sw.seconds();
        save_dataset(ds, g_out,
                     {{"case_path", fs::absolute(case_path).string()},
                      {"contingencies_path", fs::absolute(cont_path).string()},
                      {"case_hash", hex64(fnv1a64(read_file(case_path)))},
                      {"contingency_hash", hex64(fnv1a64(read_file(cont_path)))},
                      {"contingency_count", set.size()},
                      {"generate_s", seconds}});
        int safe = 0;
        for (int l : ds.labels) safe += l;
        std::cout << "rows,safe,unsafe,seconds\n"
                  << ds.rows() << ',' << safe << ',' << ds.rows() - safe << ',' << fmt_fixed(seconds, 3) << '\n';
      });
    } else if (*tf) {
      guarded("train-fsa", [&] {
        const LabeledDataset ds = load_dataset(f_data);
        const Network base = case_for(f_case, f_data);
        f_opts.seed = f_seed;
        TrainHistory h;
        const auto model = train_classifier(classifier_kind_from_string(f_model), ds, base, f_opts, &h);
        const Metrics m = evaluate(*model, ds, ds.rows_in(Split::Test));
        save_classifier(*model, f_out);
        std::string csv = "model,seed,accuracy,precision,recall,train_s,test_s\n";
        csv += f_model + ',' + std::to_string(f_seed) + ',' + fmt_fixed(m.accuracy, 2) + ',' +
               fmt_fixed(m.precision, 2) + ',' + fmt_fixed(m.recall, 2) + ',' + fmt_fixed(h.seconds, 3) + ',' +
               fmt_fixed(m.test_time, 4) + '\n';
        write_file(fs::path(f_out) / "metrics.csv", csv);
        std::cout << csv;
      });
    } else if (*ta) {
      guarded("train-agent", [&] {
        const LabeledDataset ds = load_dataset(a_data);
        const Network base = case_for(a_case, a_data);
        const auto set = contingencies_for(a_cont, a_data);
        const RlData rl = build_rl_data(base, set, ds, a_eval_points);
        const auto backend = make_backend(a_fsa, model_for(a_fsa, a_model), set);
        UflsTask task{backend.get(), rl.train_pool, rl.eval_set, select_shed_buses(base, a_shed), rl.state_std, {}};
        a_sac.lambda = a_lambda;
        TransitionLog log;
        SacTrainOptions o;
        o.episodes = a_episodes;
        o.seed = a_seed;
        o.eval_interval = a_eval_interval;
        if (!a_log.empty()) o.log = &log;
        TrainReport rep;
        const AgentParams agent = train_agent(task, a_sac, o, &rep);
        save_agent(agent, a_out);
        write_file(fs::path(a_out) / "report.csv", rep.csv(true));
        if (!a_log.empty()) log.write(a_log);
        std::cout << rep.csv(true);
      });
    } else if (*ev) {
      guarded("evaluate", [&] {
        const LabeledDataset ds = load_dataset(e_data);
        const Network base = case_for(e_case, e_data);
        const auto set = contingencies_for(e_cont, e_data);
        const RlData rl = build_rl_data(base, set, ds, e_points);
        const AgentParams agent = load_agent(e_agent);
        const auto backend = make_backend(e_fsa, model_for(e_fsa, e_model), set, e_mask, e_mask_seed,
                                          mask_mode(e_mode));
        Stopwatch sw;
        const SafetyResult r = evaluate_safety(agent, rl.eval_set, *backend);
        const double seconds = sw.seconds();
        const BalanceResult bal =
            balanced_shedding_analysis(deterministic_policy(agent), rl.tagged, agent.shed_buses, *backend);
        std::cout << "backend,points,safety_pct,total_shed,balanced_fraction,test_s\n"
                  << e_fsa << ',' << r.points << ',' << fmt_fixed(r.safety_pct, 2) << ','
                  << fmt_fixed(r.mean_shed, 4) << ',' << fmt_fixed(bal.fraction, 4) << ','
                  << fmt_fixed(seconds, 3) << '\n';
      });
    } else if (*cb) {
      guarded("compare-backends", [&] {
        const LabeledDataset ds = load_dataset(c_data);
        const Network base = case_for(c_case, c_data);
        const auto set = contingencies_for(c_cont, c_data);
        const RlData rl = build_rl_data(base, set, ds, c_points);
        std::vector<BackendEntry> entries;
        for (const auto& spec : c_entries) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos) throw InvalidInput("--entry expects backend=AGENT_DIR[,MODEL_DIR]");
          BackendEntry e;
          e.backend = spec.substr(0, eq);
          std::string rest = spec.substr(eq + 1);
          std::string model_dir;
          if (const auto comma = rest.find(','); comma != std::string::npos) {
            model_dir = rest.substr(comma + 1);
            rest = rest.substr(0, comma);
          }
          e.agent_dir = rest;
          if (e.backend != "tds" && fs::exists(model_dir)) e.model = load_classifier(model_dir);
          const fs::path report = e.agent_dir / "report.csv";
          if (fs::exists(report)) {
            const auto rows = read_numeric_csv(report);
            if (!rows.empty() && rows.back().size() >= 4) e.train_seconds = rows.back()[3];
          }
          entries.push_back(std::move(e));
        }
        const std::string csv = backend_rows_csv(compare_backends(entries, rl.eval_set, set), true);
        if (!c_out.empty()) write_file(c_out, csv);
        std::cout << csv;
      });
    } else if (*rp) {
      guarded("config", [&] {
        const ExperimentConfig cfg = load_config(p_config);
        const ReportBundle b = run_pipeline(cfg, std::cerr);
        for (const auto& p : {b.table1, b.table2, b.table3, b.table4, b.manifest}) std::cout << p.string() << '\n';
      });
    } else if (*rt) {
      guarded("replay-trajectory", [&] {
        if (!r_agent.empty()) {
          if (r_data.empty()) throw InvalidInput("--agent needs --data");
          const LabeledDataset ds = load_dataset(r_data);
          const Network base = case_for(r_case, r_data);
          const auto set = contingencies_for(r_cont, r_data);
          const RlData rl = build_rl_data(base, set, ds, r_row + 1);
          if (r_row < 0 || r_row >= static_cast<int>(rl.eval_set.size()))
            throw InvalidInput("--row beyond the unsafe evaluation points");
          const AgentParams agent = load_agent(r_agent);
          const auto backend = make_backend(r_fsa, model_for(r_fsa, r_model), set);
          const Policy policy = deterministic_policy(agent);
          TransitionLog log;
          EnvState s = make_state(rl.eval_set[static_cast<size_t>(r_row)], agent.shed_buses);
          while (!s.done) {
            Transition t = step(s, policy(s), *backend);
            log.add(r_row, t);
            s = std::move(t.next_state);
          }
          log.write(r_out);
          return;
        }
        if (r_case.empty()) throw InvalidInput("pass --case (and --contingencies) or --agent");
        const Network net = solved(load_network(resolve_case(r_case)));
        std::optional<Contingency> c;
        if (!r_cont.empty()) {
          const auto set = load_contingencies(resolve_contingencies(r_cont));
          for (const auto& x : set)
            if (x.id == r_id) c = x;
          if (!c) throw InvalidInput("no contingency with id " + std::to_string(r_id));
        }
        SimOptions o;
        o.record_stride = std::max(1, r_stride);
        const TrajectoryRecord tr = integrate_swing(DynamicModel::from_solved(net), c, o);
        write_trajectory_csv(tr, r_out);
        std::cout << "nadir_hz,peak_hz,unstable\n"
                  << fmt_fixed(tr.nadir, 6) << ',' << fmt_fixed(tr.peak, 6) << ',' << (tr.unstable ? 1 : 0) << '\n';
      });
    }
  } catch (const Failure& f) {
    std::cerr << "gridshed: " << f.stage << " failed: " << f.what << '\n';
    return 2;
  }
  return 0;
}
