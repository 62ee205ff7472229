#include "gridshed/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "gridshed/errors.hpp"
#include "gridshed/power_flow.hpp"
#include "gridshed/scenario.hpp"

namespace gridshed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const std::string& ref, const fs::path& base_dir, const fs::path& bundled,
                 const char* what) {
  const fs::path p(ref);
  if (p.is_absolute() && fs::exists(p)) return p;
  if (!base_dir.empty() && fs::exists(base_dir / p)) return fs::weakly_canonical(base_dir / p);
  if (fs::exists(p)) return fs::weakly_canonical(p);
  if (fs::exists(bundled)) return bundled;
  throw InvalidInput(std::string(what) + " '" + ref + "' not found");
}

std::string mask_mode_name(MaskMode m) {
  return m == MaskMode::ZeroRaw ? "zero_raw" : "zero_standardized";
}

MaskMode mask_mode_from(const std::string& s) {
  if (s == "zero_raw") return MaskMode::ZeroRaw;
  if (s == "zero_standardized") return MaskMode::ZeroStandardized;
  throw InvalidInput("unknown mask mode '" + s + "'");
}

std::string lambda_tag(double l) {
  std::ostringstream os;
  os << l;
  return os.str();
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first failure
/// (lowest index) is rethrown after every worker stops.
void run_cells(int n, int workers, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<size_t>(i)] = std::current_exception();
      }
    }
  };
  const int w = std::max(1, std::min(workers, n));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }
void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

Metrics masked_metrics(const Classifier& model, const LabeledDataset& ds, const std::vector<int>& rows,
                       double fraction, std::uint64_t seed, MaskMode mode) {
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  std::vector<std::vector<int>> masks;
  std::vector<int> truth;
  for (size_t i = 0; i < rows.size(); ++i) {
    Eigen::RowVectorXd row = ds.features.row(rows[i]);
    masks.push_back(mask_buses(row, ds.n_bus, fraction,
                               derive_seed(seed, "mask", static_cast<std::uint64_t>(rows[i]))));
    x.row(static_cast<Eigen::Index>(i)) = row;
    truth.push_back(ds.labels[static_cast<size_t>(rows[i])]);
  }
  const Eigen::VectorXd p = model.predict_proba(x, masks, mode);
  std::vector<int> pred(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) pred[i] = p(static_cast<Eigen::Index>(i)) >= 0.5;
  return confusion_metrics(pred, truth);
}

struct Group {
  std::vector<std::string> seeds;
  std::vector<std::vector<double>> cols;
};

std::string join(const std::vector<std::string>& xs, char sep) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) out += (i ? std::string(1, sep) : "") + xs[i];
  return out;
}

}  // namespace

fs::path resolve_case(const std::string& ref, const fs::path& base_dir) {
  return resolve(ref, base_dir, bundled_case(ref), "case");
}

fs::path resolve_contingencies(const std::string& ref, const fs::path& base_dir) {
  return resolve(ref, base_dir, bundled_contingencies(ref), "contingency set");
}

// ---- config ---------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (!fs::exists(case_path)) throw InvalidInput("case file " + case_path.string() + " does not exist");
  if (!fs::exists(contingency_path))
    throw InvalidInput("contingency file " + contingency_path.string() + " does not exist");
  if (seeds.empty()) throw InvalidInput("config needs at least one seed");
  if (dataset_size < 10) throw InvalidInput("dataset_size must be at least 10");
  if (classifiers.empty()) throw InvalidInput("config needs at least one classifier");
  if (lambdas.empty()) throw InvalidInput("config needs at least one lambda");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw InvalidInput("lambda values must be non-negative");
  if (episodes < 0) throw InvalidInput("episodes must be non-negative");
  if (output_dir.empty()) throw InvalidInput("config needs an output directory");
  if (eval_points < 1 || eval_interval < 1 || shed_count < 1 || workers < 1)
    throw InvalidInput("eval_points, eval_interval, shed_count and workers must be positive");
  if (mask_fraction < 0.0 || mask_fraction >= 1.0) throw InvalidInput("mask_fraction must be in [0, 1)");
  for (const auto& b : rl_backends) {
    if (b == "tds") continue;
    const auto k = classifier_kind_from_string(b);
    if (std::find(classifiers.begin(), classifiers.end(), k) == classifiers.end())
      throw InvalidInput("rl backend '" + b + "' is not among the trained classifiers");
  }
}

json ExperimentConfig::to_json() const {
  json c = {{"epochs", classifier.epochs},         {"lr", classifier.lr},
            {"batch_size", classifier.batch_size}, {"dt_max_depth", classifier.dt_max_depth},
            {"dt_min_leaf", classifier.dt_min_leaf}, {"svm_epochs", classifier.svm_epochs},
            {"svm_lr", classifier.svm_lr},         {"svm_lambda", classifier.svm_lambda},
            {"gnn_n_max", classifier.gnn_n_max}};
  std::vector<std::string> kinds;
  for (auto k : classifiers) kinds.push_back(to_string(k));
  return {{"case", case_path.filename().string()},
          {"contingencies", contingency_path.filename().string()},
          {"seeds", seeds},
          {"dataset_size", dataset_size},
          {"classifiers", kinds},
          {"lambdas", lambdas},
          {"episodes", episodes},
          {"rl_backends", rl_backends},
          {"shed_count", shed_count},
          {"eval_points", eval_points},
          {"eval_interval", eval_interval},
          {"mask_fraction", mask_fraction},
          {"mask_mode", mask_mode_name(mask_mode)},
          {"classifier", c},
          {"sac", sac}};
}

std::string ExperimentConfig::hash() const {
  const std::string text = to_json().dump() + "\n" + read_file(case_path) + "\n" +
                           read_file(contingency_path);
  return hex64(fnv1a64(text));
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  c.case_path = resolve_case(j.at("case").get<std::string>(), base_dir);
  c.contingency_path = resolve_contingencies(j.at("contingencies").get<std::string>(), base_dir);
  c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.dataset_size = j.value("dataset_size", c.dataset_size);
  if (j.contains("classifiers")) {
    c.classifiers.clear();
    for (const auto& k : j["classifiers"]) c.classifiers.push_back(classifier_kind_from_string(k.get<std::string>()));
  }
  c.lambdas = j.value("lambdas", c.lambdas);
  c.episodes = j.value("episodes", c.episodes);
  const fs::path out = j.at("output").get<std::string>();
  c.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
  c.rl_backends = j.value("rl_backends", c.rl_backends);
  c.shed_count = j.value("shed_count", c.shed_count);
  c.eval_points = j.value("eval_points", c.eval_points);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.mask_fraction = j.value("mask_fraction", c.mask_fraction);
  if (j.contains("mask_mode")) c.mask_mode = mask_mode_from(j["mask_mode"].get<std::string>());
  if (j.contains("classifier")) {
    const auto& k = j["classifier"];
    auto& o = c.classifier;
    o.epochs = k.value("epochs", o.epochs);
    o.lr = k.value("lr", o.lr);
    o.batch_size = k.value("batch_size", o.batch_size);
    o.dt_max_depth = k.value("dt_max_depth", o.dt_max_depth);
    o.dt_min_leaf = k.value("dt_min_leaf", o.dt_min_leaf);
    o.svm_epochs = k.value("svm_epochs", o.svm_epochs);
    o.svm_lr = k.value("svm_lr", o.svm_lr);
    o.svm_lambda = k.value("svm_lambda", o.svm_lambda);
    o.gnn_n_max = k.value("gnn_n_max", o.gnn_n_max);
  }
  if (j.contains("sac")) from_json(j["sac"], c.sac);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---- RL plumbing ----------------------------------------------------------

int contingency_bus(const Network& net, const Contingency& c) {
  if (c.kind == ContingencyKind::LoadStep) return c.location;
  return net.lines.at(static_cast<size_t>(c.location)).to_bus;
}

RlData build_rl_data(const Network& base, const std::vector<Contingency>& set,
                     const LabeledDataset& ds, int eval_points) {
  if (ds.split.size() != ds.labels.size()) throw InvalidInput("dataset has no split tags");
  std::map<int, const Contingency*> by_id;
  for (const auto& c : set) by_id[c.id] = &c;
  RlData out;
  const auto train = ds.rows_in(Split::Train);
  out.state_std = Standardizer::fit(injections_from_features(ds.features, ds.n_bus), train);
  auto rebuild = [&](int r) {
    const auto gs = ds.gen_scale.row(r);
    const auto ls = ds.load_scale.row(r);
    return apply_scales(base, std::vector<double>(gs.data(), gs.data() + gs.size()),
                        std::vector<double>(ls.data(), ls.data() + ls.size()))
        .solved;
  };
  for (int r = 0; r < ds.rows(); ++r) {
    if (ds.labels[static_cast<size_t>(r)] == 1) continue;
    if (ds.split[static_cast<size_t>(r)] == Split::Train) {
      out.train_pool.push_back(rebuild(r));
    } else if (static_cast<int>(out.eval_set.size()) < eval_points) {
      Network n = rebuild(r);
      const auto it = by_id.find(ds.binding[static_cast<size_t>(r)]);
      const int bus = it == by_id.end() ? -1 : contingency_bus(base, *it->second);
      out.tagged.push_back({n, bus});
      out.eval_set.push_back(std::move(n));
    }
  }
  return out;
}

std::unique_ptr<FsaBackend> make_backend(const std::string& kind,
                                         std::shared_ptr<const Classifier> model,
                                         const std::vector<Contingency>& set, double mask_fraction,
                                         std::uint64_t mask_seed, MaskMode mode) {
  if (kind == "tds") return std::make_unique<TdsBackend>(set);
  const auto k = classifier_kind_from_string(kind);
  if (!model) throw InvalidInput("backend '" + kind + "' needs a trained classifier");
  if (model->kind() != k) throw InvalidInput("classifier checkpoint is not a " + kind + " model");
  return std::make_unique<SurrogateBackend>(std::move(model), mask_fraction, mask_seed, mode);
}

std::vector<BackendRow> compare_backends(const std::vector<BackendEntry>& entries,
                                         const std::vector<Network>& unsafe_set,
                                         const std::vector<Contingency>& set, const EnvConfig& env) {
  if (unsafe_set.empty()) throw InvalidInput("unsafe set is empty");
  TdsBackend tds(set);
  std::vector<BackendRow> rows;
  for (const auto& e : entries) {
    BackendRow row;
    row.backend = e.backend;
    row.train_seconds = e.train_seconds;
    if (!fs::exists(e.agent_dir / "manifest.json")) {
      row.skipped = true;
      row.note = "missing checkpoint " + e.agent_dir.string();
      rows.push_back(row);
      continue;
    }
    const AgentParams agent = load_agent(e.agent_dir);
    const auto backend = make_backend(e.backend, e.model, set);
    Stopwatch sw;
    const SafetyResult own = evaluate_safety(agent, unsafe_set, *backend, env);
    row.test_seconds = sw.seconds();
    row.safety_backend = own.safety_pct;
    row.total_shed = own.mean_shed;
    row.safety_tds = e.backend == "tds" ? own.safety_pct : evaluate_safety(agent, unsafe_set, tds, env).safety_pct;
    rows.push_back(row);
  }
  return rows;
}

std::string backend_rows_csv(const std::vector<BackendRow>& rows, bool with_times) {
  std::ostringstream os;
  os << "backend,test_on_backend,test_on_tds,total_shed";
  if (with_times) os << ",train_s,test_s";
  os << ",note\n";
  for (const auto& r : rows) {
    os << r.backend << ',';
    if (r.skipped) {
      os << ",,";
      if (with_times) os << ",,";
    } else {
      os << fmt_fixed(r.safety_backend, 2) << ',' << fmt_fixed(r.safety_tds, 2) << ','
         << fmt_fixed(r.total_shed, 4);
      if (with_times) os << ',' << fmt_fixed(r.train_seconds, 3) << ',' << fmt_fixed(r.test_seconds, 3);
    }
    os << ',' << r.note << '\n';
  }
  return os.str();
}

// ---- pipeline -------------------------------------------------------------

namespace {

const std::vector<std::string> kStages{"gen-data", "train-fsa", "train-agent", "evaluate"};

struct Context {
  const ExperimentConfig& cfg;
  std::ostream& log;
  std::string hash;
  fs::path out;
  Network base;
  std::vector<Contingency> set;
  std::mutex log_mutex;

  void say(const std::string& s) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log << s << std::endl;
  }
  fs::path fsa_dir(ClassifierKind k, std::uint64_t seed) const {
    return out / "fsa" / (to_string(k) + "_s" + std::to_string(seed));
  }
  fs::path agent_dir(const std::string& b, double l, std::uint64_t seed) const {
    return out / "agents" / (b + "_l" + lambda_tag(l) + "_s" + std::to_string(seed));
  }
};

struct AgentCell {
  std::string backend;
  double lambda;
  std::uint64_t seed;
};

std::vector<AgentCell> agent_cells(const ExperimentConfig& cfg) {
  std::vector<AgentCell> cells;
  for (const auto& b : cfg.rl_backends)
    for (double l : cfg.lambdas)
      for (auto s : cfg.seeds) cells.push_back({b, l, s});
  return cells;
}

std::shared_ptr<const Classifier> cell_model(const Context& ctx, const std::string& backend,
                                             std::uint64_t seed) {
  if (backend == "tds") return nullptr;
  return load_classifier(ctx.fsa_dir(classifier_kind_from_string(backend), seed));
}

void stage_gen_data(Context& ctx) {
  const auto& cfg = ctx.cfg;
  GenerateOptions opts;
  const int every = std::max(1, cfg.dataset_size / 10);
  opts.progress = [&](int done, int total) {
    if (done % every == 0 || done == total)
      ctx.say("gen-data: " + std::to_string(done) + "/" + std::to_string(total));
  };
  Stopwatch sw;
  LabeledDataset ds = generate_dataset(ctx.base, ctx.set, cfg.dataset_size, cfg.seeds.front(), opts);
  split_dataset(ds, derive_seed(cfg.seeds.front(), "split"));
  const double seconds = sw.seconds();
  save_dataset(ds, ctx.out / "data",
               {{"case", cfg.case_path.filename().string()},
                {"contingencies", cfg.contingency_path.filename().string()},
                {"config_hash", ctx.hash}});
  write_json(ctx.out / "results" / "data.json", {{"timing", {{"generate_s", seconds}}}});
}

void stage_train_fsa(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const LabeledDataset ds = load_dataset(ctx.out / "data");
  const auto test = ds.rows_in(Split::Test);
  struct Cell {
    ClassifierKind kind;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto s : cfg.seeds)
    for (auto k : cfg.classifiers) cells.push_back({k, s});
  fs::create_directories(ctx.out / "results" / "fsa");
  run_cells(static_cast<int>(cells.size()), cfg.workers, [&](int i) {
    const auto& c = cells[static_cast<size_t>(i)];
    try {
      ClassifierTrainOptions o = cfg.classifier;
      o.seed = c.seed;
      TrainHistory h;
      const auto model = train_classifier(c.kind, ds, ctx.base, o, &h);
      const Metrics m = evaluate(*model, ds, test);
      const Metrics mm = masked_metrics(*model, ds, test, cfg.mask_fraction,
                                        derive_seed(c.seed, "eval"), cfg.mask_mode);
      save_classifier(*model, ctx.fsa_dir(c.kind, c.seed));
      json r = {{"model", to_string(c.kind)},
                {"seed", c.seed},
                {"accuracy", m.accuracy},
                {"precision", m.precision},
                {"recall", m.recall},
                {"tp", m.tp}, {"tn", m.tn}, {"fp", m.fp}, {"fn", m.fn},
                {"degenerate", m.degenerate},
                {"masked_accuracy", mm.accuracy},
                {"best_epoch", h.best_epoch},
                {"timing", {{"train_s", h.seconds}, {"test_s", m.test_time}}}};
      write_json(ctx.out / "results" / "fsa" / (to_string(c.kind) + "_s" + std::to_string(c.seed) + ".json"), r);
      ctx.say("train-fsa: " + to_string(c.kind) + " seed " + std::to_string(c.seed) + " accuracy " +
              fmt_fixed(m.accuracy, 2));
    } catch (const std::exception& e) {
      throw StageError("train-fsa", static_cast<std::int64_t>(c.seed), e.what());
    }
  });
}

void stage_train_agent(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const LabeledDataset ds = load_dataset(ctx.out / "data");
  const RlData rl = build_rl_data(ctx.base, ctx.set, ds, cfg.eval_points);
  if (rl.train_pool.empty() || rl.eval_set.empty())
    throw StageError("train-agent", -1, "dataset has no unsafe points to train or evaluate on");
  const auto shed = select_shed_buses(ctx.base, cfg.shed_count);
  const auto cells = agent_cells(cfg);
  fs::create_directories(ctx.out / "results" / "agents");
  run_cells(static_cast<int>(cells.size()), cfg.workers, [&](int i) {
    const auto& c = cells[static_cast<size_t>(i)];
    try {
      const auto backend = make_backend(c.backend, cell_model(ctx, c.backend, c.seed), ctx.set);
      UflsTask task{backend.get(), rl.train_pool, rl.eval_set, shed, rl.state_std, {}};
      SacConfig sc = cfg.sac;
      sc.lambda = c.lambda;
      SacTrainOptions o;
      o.episodes = cfg.episodes;
      o.seed = c.seed;
      o.eval_interval = cfg.eval_interval;
      TrainReport rep;
      const AgentParams agent = train_agent(task, sc, o, &rep);
      const fs::path dir = ctx.agent_dir(c.backend, c.lambda, c.seed);
      save_agent(agent, dir);
      write_file(dir / "report.csv", rep.csv(false));
      double ret = 0.0;
      for (double r : rep.episode_returns) ret += r;
      json r = {{"backend", c.backend},
                {"lambda", c.lambda},
                {"seed", c.seed},
                {"transitions", rep.transitions},
                {"mean_episode_return", rep.episode_returns.empty() ? 0.0 : ret / rep.episode_returns.size()},
                {"checkpoint_safety", rep.safety_pct},
                {"checkpoint_shed", rep.total_shed},
                {"timing", {{"train_s", rep.seconds}}}};
      write_json(ctx.out / "results" / "agents" / (dir.filename().string() + ".json"), r);
      ctx.say("train-agent: " + dir.filename().string() + " done (" + std::to_string(rep.transitions) +
              " transitions)");
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("train-agent", static_cast<std::int64_t>(c.seed), e.what());
    }
  });
}

void stage_evaluate(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const LabeledDataset ds = load_dataset(ctx.out / "data");
  const RlData rl = build_rl_data(ctx.base, ctx.set, ds, cfg.eval_points);
  const auto cells = agent_cells(cfg);
  const TdsBackend tds(ctx.set);
  fs::create_directories(ctx.out / "results" / "eval");
  run_cells(static_cast<int>(cells.size()), cfg.workers, [&](int i) {
    const auto& c = cells[static_cast<size_t>(i)];
    try {
      const fs::path dir = ctx.agent_dir(c.backend, c.lambda, c.seed);
      const AgentParams agent = load_agent(dir);
      const auto model = cell_model(ctx, c.backend, c.seed);
      const auto own = make_backend(c.backend, model, ctx.set);
      const auto masked = make_backend(c.backend, model, ctx.set, c.backend == "tds" ? 0.0 : cfg.mask_fraction,
                                       derive_seed(c.seed, "eval"), cfg.mask_mode);
      Stopwatch sw;
      const SafetyResult r_own = evaluate_safety(agent, rl.eval_set, *own);
      const double test_s = sw.seconds();
      const SafetyResult r_tds = c.backend == "tds" ? r_own : evaluate_safety(agent, rl.eval_set, tds);
      const SafetyResult r_mask = evaluate_safety(agent, rl.eval_set, *masked);
      const BalanceResult bal =
          balanced_shedding_analysis(deterministic_policy(agent), rl.tagged, agent.shed_buses, *own);
      json r = {{"backend", c.backend},
                {"lambda", c.lambda},
                {"seed", c.seed},
                {"points", r_own.points},
                {"safety", r_own.safety_pct},
                {"shed", r_own.mean_shed},
                {"safety_tds", r_tds.safety_pct},
                {"shed_tds", r_tds.mean_shed},
                {"safety_masked", r_mask.safety_pct},
                {"balanced_fraction", bal.fraction},
                {"balanced_evaluated", bal.evaluated},
                {"balanced_skipped", bal.skipped},
                {"timing", {{"test_s", test_s}}}};
      write_json(ctx.out / "results" / "eval" / (dir.filename().string() + ".json"), r);
      ctx.say("evaluate: " + dir.filename().string() + " safety " + fmt_fixed(r_own.safety_pct, 1) +
              " (tds " + fmt_fixed(r_tds.safety_pct, 1) + ")");
    } catch (const std::exception& e) {
      throw StageError("evaluate", static_cast<std::int64_t>(c.seed), e.what());
    }
  });
}

/// Aggregate row helpers: mean and sample std over per-seed values.
std::string mean_std(const std::vector<double>& v, int digits) {
  return fmt_fixed(mean_of(v), digits) + "," + fmt_fixed(sample_std(v), digits);
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::vector<std::string> s;
  for (auto x : seeds) s.push_back(std::to_string(x));
  return join(s, ';');
}

void write_reports(Context& ctx, ReportBundle& bundle, json& timings) {
  const auto& cfg = ctx.cfg;
  const fs::path res = ctx.out / "results";
  const std::string& h = ctx.hash;
  const std::string all = seed_list(cfg.seeds);

  // table 1: classifier metrics
  std::ostringstream t1, t4;
  t1 << "config_hash,model,seed,accuracy,accuracy_std,precision,precision_std,recall,recall_std\n";
  t4 << "config_hash,level,model,lambda,seed,unmasked,unmasked_std,masked,masked_std,delta\n";
  json fsa_times = json::object();
  for (auto k : cfg.classifiers) {
    std::vector<double> acc, prec, rec, macc;
    for (auto s : cfg.seeds) {
      const json r = read_json(res / "fsa" / (to_string(k) + "_s" + std::to_string(s) + ".json"));
      acc.push_back(r.at("accuracy"));
      prec.push_back(r.at("precision"));
      rec.push_back(r.at("recall"));
      macc.push_back(r.at("masked_accuracy"));
      fsa_times[to_string(k) + "_s" + std::to_string(s)] = r.at("timing");
      t1 << h << ',' << to_string(k) << ',' << s << ',' << fmt_fixed(acc.back(), 2) << ",,"
         << fmt_fixed(prec.back(), 2) << ",," << fmt_fixed(rec.back(), 2) << ",\n";
      t4 << h << ",classifier," << to_string(k) << ",," << s << ',' << fmt_fixed(acc.back(), 2) << ",,"
         << fmt_fixed(macc.back(), 2) << ",," << fmt_fixed(macc.back() - acc.back(), 2) << '\n';
    }
    t1 << h << ',' << to_string(k) << ',' << all << ',' << mean_std(acc, 2) << ',' << mean_std(prec, 2) << ','
       << mean_std(rec, 2) << '\n';
    t4 << h << ",classifier," << to_string(k) << ",," << all << ',' << mean_std(acc, 2) << ','
       << mean_std(macc, 2) << ',' << fmt_fixed(mean_of(macc) - mean_of(acc), 2) << '\n';
  }
  timings["fsa"] = fsa_times;

  // table 2: lambda sweep; table 3: backends at the largest lambda
  std::ostringstream t2, t3;
  t2 << "config_hash,backend,lambda,seed,safety_pct,safety_std,total_shed,total_shed_std,"
        "balanced_fraction,mean_episode_return\n";
  t3 << "config_hash,backend,lambda,seed,test_on_backend,test_on_backend_std,test_on_tds,"
        "test_on_tds_std,total_shed,total_shed_std\n";
  const double lmax = *std::max_element(cfg.lambdas.begin(), cfg.lambdas.end());
  json agent_times = json::object();
  json backend_times = json::object();
  for (const auto& b : cfg.rl_backends) {
    double train_sum = 0.0, test_sum = 0.0;
    int n_runs = 0;
    for (double l : cfg.lambdas) {
      std::vector<double> saf, shed, bal, ret, tds, mask;
      for (auto s : cfg.seeds) {
        const std::string name = ctx.agent_dir(b, l, s).filename().string();
        const json tr = read_json(res / "agents" / (name + ".json"));
        const json ev = read_json(res / "eval" / (name + ".json"));
        saf.push_back(ev.at("safety"));
        shed.push_back(ev.at("shed"));
        bal.push_back(ev.at("balanced_fraction"));
        ret.push_back(tr.at("mean_episode_return"));
        tds.push_back(ev.at("safety_tds"));
        mask.push_back(ev.at("safety_masked"));
        agent_times[name] = {{"train_s", tr.at("timing").at("train_s")},
                             {"test_s", ev.at("timing").at("test_s")}};
        if (l == lmax) {
          train_sum += tr.at("timing").at("train_s").get<double>();
          test_sum += ev.at("timing").at("test_s").get<double>();
          ++n_runs;
        }
        t2 << h << ',' << b << ',' << lambda_tag(l) << ',' << s << ',' << fmt_fixed(saf.back(), 2) << ",,"
           << fmt_fixed(shed.back(), 4) << ",," << fmt_fixed(bal.back(), 4) << ','
           << fmt_fixed(ret.back(), 4) << '\n';
        if (l == lmax)
          t3 << h << ',' << b << ',' << lambda_tag(l) << ',' << s << ',' << fmt_fixed(saf.back(), 2) << ",,"
             << fmt_fixed(tds.back(), 2) << ",," << fmt_fixed(shed.back(), 4) << ",\n";
        t4 << h << ",agent," << b << ',' << lambda_tag(l) << ',' << s << ',' << fmt_fixed(saf.back(), 2)
           << ",," << fmt_fixed(mask.back(), 2) << ",," << fmt_fixed(mask.back() - saf.back(), 2) << '\n';
      }
      t2 << h << ',' << b << ',' << lambda_tag(l) << ',' << all << ',' << mean_std(saf, 2) << ','
         << mean_std(shed, 4) << ',' << fmt_fixed(mean_of(bal), 4) << ',' << fmt_fixed(mean_of(ret), 4) << '\n';
      if (l == lmax)
        t3 << h << ',' << b << ',' << lambda_tag(l) << ',' << all << ',' << mean_std(saf, 2) << ','
           << mean_std(tds, 2) << ',' << mean_std(shed, 4) << '\n';
      t4 << h << ",agent," << b << ',' << lambda_tag(l) << ',' << all << ',' << mean_std(saf, 2) << ','
         << mean_std(mask, 2) << ',' << fmt_fixed(mean_of(mask) - mean_of(saf), 2) << '\n';
    }
    backend_times[b] = {{"lambda", lmax},
                        {"mean_train_s", n_runs ? train_sum / n_runs : 0.0},
                        {"mean_test_s", n_runs ? test_sum / n_runs : 0.0}};
  }
  timings["agents"] = agent_times;
  timings["table3"] = backend_times;

  bundle.table1 = ctx.out / "table1_classifiers.csv";
  bundle.table2 = ctx.out / "table2_lambda.csv";
  bundle.table3 = ctx.out / "table3_backends.csv";
  bundle.table4 = ctx.out / "table4_masking.csv";
  write_file(bundle.table1, t1.str());
  write_file(bundle.table2, t2.str());
  write_file(bundle.table3, t3.str());
  write_file(bundle.table4, t4.str());
}

}  // namespace

ReportBundle run_pipeline(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  Context ctx{cfg, log, cfg.hash(), cfg.output_dir, {}, {}, {}};
  const std::string started = now_utc();
  try {
    ctx.base = solved(load_network(cfg.case_path));
    ctx.set = load_contingencies(cfg.contingency_path);
  } catch (const std::exception& e) {
    throw StageError("load", -1, e.what());
  }
  fs::create_directories(ctx.out / "stages");
  fs::create_directories(ctx.out / "results");

  ReportBundle bundle;
  json timings = json::object();
  json stage_seconds = json::object();
  bool invalidated = false;
  const std::vector<void (*)(Context&)> runners{stage_gen_data, stage_train_fsa, stage_train_agent,
                                                stage_evaluate};
  for (size_t i = 0; i < kStages.size(); ++i) {
    const std::string& name = kStages[i];
    const fs::path marker = ctx.out / "stages" / (name + ".done");
    if (!invalidated && fs::exists(marker)) {
      const std::string stored = read_file(marker);
      if (stored == ctx.hash) {
        ctx.say(name + ": complete, skipped");
        bundle.stages_skipped.push_back(name);
        continue;
      }
      ctx.say(name + ": config hash " + ctx.hash + " does not match marker " + stored + ", rerunning");
    }
    invalidated = true;  // everything downstream of a rerun stage reruns too
    fs::remove(marker);
    ctx.say(name + ": running");
    Stopwatch sw;
    try {
      runners[i](ctx);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, -1, e.what());
    }
    stage_seconds[name] = sw.seconds();
    write_file(marker, ctx.hash);
    bundle.stages_run.push_back(name);
  }

  try {
    write_reports(ctx, bundle, timings);
  } catch (const std::exception& e) {
    throw StageError("report", -1, e.what());
  }
  if (fs::exists(ctx.out / "results" / "data.json"))
    timings["data"] = read_json(ctx.out / "results" / "data.json").at("timing");

  json manifest = {
      {"config_hash", ctx.hash},
      {"config", cfg.to_json()},
      {"versions",
       {{"gridshed", "1.0.0"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}}},
      {"started", started},
      {"finished", now_utc()},
      {"stages_run", bundle.stages_run},
      {"stages_skipped", bundle.stages_skipped},
      {"stage_seconds", stage_seconds},
      {"timings", timings},
      {"outputs",
       {bundle.table1.filename().string(), bundle.table2.filename().string(),
        bundle.table3.filename().string(), bundle.table4.filename().string()}}};
  bundle.manifest = ctx.out / "manifest.json";
  write_json(bundle.manifest, manifest);
  return bundle;
}

}  // namespace gridshed
