#include "loant/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace loant {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kEvalChunk = 256;

struct Scored {
  std::vector<int> predictions;
  double loss_sum = 0.0;
};

Scored score(const ModelParams& params, const std::vector<Example>& examples, Domain domain) {
  Scored out;
  for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
    const std::vector<Example> chunk(
        examples.begin() + static_cast<std::ptrdiff_t>(start),
        examples.begin() + static_cast<std::ptrdiff_t>(std::min(examples.size(), start + kEvalChunk)));
    const LabeledBatch batch = to_batch(chunk);
    Tape tape;
    const ParamNodes p = bind(tape, params);
    const NodeId z = encode(tape, p, batch);
    const NodeId logits = classify(tape, p, private_features(tape, p, z, domain),
                                   shared_features(tape, p, z), domain);
    const NodeId loss = tape.softmax_cross_entropy(logits, batch.one_hot);
    out.loss_sum += tape.value(loss).item() * static_cast<double>(chunk.size());
    const Tensor& l = tape.value(logits);
    for (std::size_t r = 0; r < l.rows(); ++r) out.predictions.push_back(l.at(r, 1) > l.at(r, 0));
  }
  return out;
}

std::vector<int> labels_of(const std::vector<Example>& examples) {
  std::vector<int> y;
  y.reserve(examples.size());
  for (const Example& e : examples) y.push_back(e.label);
  return y;
}

}  // namespace

std::vector<int> predict(const ModelParams& params, const std::vector<Example>& examples,
                         Domain domain) {
  return score(params, examples, domain).predictions;
}

Evaluation evaluate(const ModelParams& params, const std::vector<Example>& examples,
                    Domain domain) {
  if (examples.empty()) throw Error("evaluate: no examples");
  const Scored s = score(params, examples, domain);
  return Evaluation{f_score(s.predictions, labels_of(examples)),
                    s.loss_sum / static_cast<double>(examples.size())};
}

DomainPair prepare_pair(const DomainPair& raw, std::uint64_t seed) {
  DomainPair out = raw;
  dedup_and_trim(out.source, out.target, 100);
  out.target = balance_classes(out.target, seed);
  return out;
}

// ---------------------------------------------------------------------------

MetricsReport train_and_select(Strategy strategy, const DomainPair& data, double lr,
                               std::uint64_t seed, const RunOptions& options,
                               ModelParams* final_params) {
  MetricsReport report;
  report.strategy = strategy;
  report.seed = seed;
  report.lr = lr;

  TrainingConfig cfg = options.training;
  cfg.strategy = strategy;
  cfg.lr = lr;
  cfg.seed = seed;

  const std::vector<Example> target_dev = data.target.split(Split::kDev);
  const std::vector<Example> target_test = data.target.split(Split::kTest);

  try {
    ModelParams params = ModelParams::init(options.model, seed);
    if (strategy == Strategy::kSeqFinetune) {
      SequentialResult r = sequential_finetune(params, data, cfg, cfg.epochs, seed);
      report.epochs = r.phase1;
      report.epochs.insert(report.epochs.end(), r.phase2.begin(), r.phase2.end());
      report.epoch = r.phase2_epoch;
      params = std::move(r.params);
      for (const EpochReport& e : report.epochs) {
        report.wall_ms += e.wall_ms;
        if (options.on_epoch) options.on_epoch(e);
      }
    } else {
      Trainer trainer(params, data.source.split(Split::kTrain), data.target.split(Split::kTrain),
                      cfg);
      std::vector<ModelParams> snapshots;
      std::vector<double> dev_f;
      for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochReport er = trainer.run_epoch();
        report.wall_ms += er.wall_ms;
        report.aux_state = std::max(report.aux_state, er.aux_state_scalars);
        if (options.on_epoch) options.on_epoch(er);
        report.epochs.push_back(std::move(er));
        snapshots.push_back(params);
        dev_f.push_back(evaluate(params, target_dev, Domain::kTarget).score.f);
      }
      if (snapshots.empty()) throw Error("train_and_select: zero epochs");
      report.epoch = select_model(dev_f);
      params = snapshots[report.epoch];
    }
    report.dev = evaluate(params, target_dev, Domain::kTarget).score;
    report.test = evaluate(params, target_test, Domain::kTarget).score;
    if (final_params) *final_params = std::move(params);
  } catch (const NonFiniteError& e) {
    report.failed = true;
    report.error = e.what();
  }
  return report;
}

SequentialResult sequential_finetune(const ModelParams& params, const DomainPair& data,
                                     const TrainingConfig& config, std::size_t phase1_epochs,
                                     std::uint64_t head_seed) {
  SequentialResult out;
  ModelParams current = params;

  auto run_phase = [&](Strategy s, std::size_t epochs, Domain domain,
                       std::vector<EpochReport>& log, std::vector<double>* dev_loss) {
    if (epochs == 0) return std::size_t{0};
    TrainingConfig cfg = config;
    cfg.strategy = s;
    cfg.epochs = epochs;
    const DomainDataset& d = domain == Domain::kSource ? data.source : data.target;
    const std::vector<Example> dev = d.split(Split::kDev);
    Trainer trainer(current, data.source.split(Split::kTrain), data.target.split(Split::kTrain),
                    cfg);
    std::vector<ModelParams> snapshots;
    std::vector<double> dev_f;
    for (std::size_t e = 0; e < epochs; ++e) {
      log.push_back(trainer.run_epoch());
      const Evaluation ev = evaluate(current, dev, domain);
      snapshots.push_back(current);
      dev_f.push_back(ev.score.f);
      if (dev_loss) dev_loss->push_back(ev.loss);
    }
    const std::size_t best = select_model(dev_f);
    current = snapshots[best];
    return best;
  };

  out.phase1_epoch = run_phase(Strategy::kSourceOnly, phase1_epochs, Domain::kSource, out.phase1,
                               nullptr);
  current.reinit_group(ParamGroup::kShared, head_seed);
  current.reinit_group(ParamGroup::kTarget, head_seed);
  out.phase2_epoch = run_phase(Strategy::kTargetOnly, config.epochs, Domain::kTarget, out.phase2,
                               &out.phase2_dev_loss);
  out.params = std::move(current);
  return out;
}

// ---------------------------------------------------------------------------
// Experiment spec

void ExperimentSpec::validate() const {
  if (strategies.empty()) throw Error("experiment: need at least one strategy");
  if (seeds.empty()) throw Error("experiment: need at least one seed");
  if (lr_grid.empty()) throw Error("experiment: learning-rate grid is empty");
  for (double lr : lr_grid)
    if (!(lr > 0.0)) throw Error("experiment: learning rates must be positive");
  for (Strategy s : strategies)
    if (s == Strategy::kSourceOnly || s == Strategy::kTargetOnly)
      throw Error("experiment: single-domain phases are not standalone strategies");
  if (!generator && (source_path.empty() || target_path.empty()))
    throw Error("experiment: give dataset paths or a generator config");
  TrainingConfig t = training;
  t.strategy = Strategy::kAnt;
  t.validate();
}

ExperimentSpec ExperimentSpec::defaults() {
  ExperimentSpec s;
  s.strategies = {Strategy::kAnt, Strategy::kLoant, Strategy::kMtl, Strategy::kMtlLo};
  for (std::uint64_t i = 1; i <= 10; ++i) s.seeds.push_back(i);
  s.lr_grid = {3e-3, 1e-2, 3e-2, 1e-1};
  s.generator = GeneratorConfig::defaults();
  s.output_dir = "out";
  return s;
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
  ExperimentSpec s = defaults();
  s.generator.reset();
  try {
    const json j = json::parse(text);
    if (j.contains("strategies")) {
      s.strategies.clear();
      for (const auto& n : j.at("strategies")) s.strategies.push_back(parse_strategy(n.get<std::string>()));
    }
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("lr_grid")) s.lr_grid = j.at("lr_grid").get<std::vector<double>>();
    if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("source")) s.source_path = j.at("source").get<std::string>();
    if (j.contains("target")) s.target_path = j.at("target").get<std::string>();
    if (j.contains("model")) {
      const auto& m = j.at("model");
      s.model.vocab_size = m.value("vocab_size", s.model.vocab_size);
      s.model.embed_dim = m.value("embed_dim", s.model.embed_dim);
      s.model.latent_dim = m.value("latent_dim", s.model.latent_dim);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      s.training.gamma = t.value("gamma", s.training.gamma);
      s.training.batch_size = t.value("batch_size", s.training.batch_size);
      s.training.epochs = t.value("epochs", s.training.epochs);
      s.training.adam.beta1 = t.value("beta1", s.training.adam.beta1);
      s.training.adam.beta2 = t.value("beta2", s.training.adam.beta2);
      s.training.adam.eps = t.value("eps", s.training.adam.eps);
      s.training.grl.steepness = t.value("grl_steepness", s.training.grl.steepness);
      if (t.contains("lambda")) s.training.fixed_lambda = t.at("lambda").get<double>();
    }
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      GeneratorConfig c = GeneratorConfig::with_token_sets(
          g.value("vocab_size", std::size_t{3000}), g.value("signal_per_class", std::size_t{20}),
          g.value("cue_per_set", std::size_t{20}), g.value("private_per_domain", std::size_t{200}));
      c.signal_rate = g.value("signal_rate", c.signal_rate);
      c.signal_purity = g.value("signal_purity", c.signal_purity);
      c.cue_share = g.value("cue_share", c.cue_share);
      c.cue_fraction = g.value("cue_fraction", c.cue_fraction);
      c.cue_purity = g.value("cue_purity", c.cue_purity);
      c.source_positive_rate = g.value("source_positive_rate", c.source_positive_rate);
      c.target_positive_rate = g.value("target_positive_rate", c.target_positive_rate);
      c.seed = g.value("seed", c.seed);
      if (g.contains("source_sizes"))
        c.source_sizes = {g.at("source_sizes").at(0).get<std::size_t>(),
                          g.at("source_sizes").at(1).get<std::size_t>()};
      if (g.contains("target_sizes"))
        c.target_sizes = {g.at("target_sizes").at(0).get<std::size_t>(),
                          g.at("target_sizes").at(1).get<std::size_t>()};
      s.generator = c;
    }
  } catch (const json::exception& e) {
    throw Error(std::string("experiment spec: ") + e.what());
  }
  if (!s.generator && s.source_path.empty()) s.generator = GeneratorConfig::defaults();
  s.validate();
  return s;
}

std::optional<Strategy> lr_parent(Strategy s) {
  switch (s) {
    case Strategy::kLoant:
    case Strategy::kAntMaml: return Strategy::kAnt;
    case Strategy::kMtlLo: return Strategy::kMtl;
    default: return std::nullopt;
  }
}

double resource_footprint(Strategy s, std::size_t batch, std::size_t latent,
                          std::size_t encoder_scalars) {
  // z' overwrites z once L_d has been formed, so latent optimization keeps
  // the latent footprint; the parameter-space look-ahead adds a copy of w_b.
  const double latents = 2.0 * static_cast<double>(batch) * static_cast<double>(latent);
  return latents + (s == Strategy::kAntMaml ? static_cast<double>(encoder_scalars) : 0.0);
}

bool ExperimentResult::any_failed() const {
  for (const MetricsReport& r : reports)
    if (r.failed) return true;
  for (const MetricsReport& r : grid_runs)
    if (r.failed) return true;
  return false;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("LOANT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct Job {
  Strategy strategy;
  std::uint64_t seed;
  double lr;
};

std::vector<MetricsReport> run_jobs(const std::vector<Job>& jobs, const DomainPair& data,
                                    const RunOptions& options) {
  std::vector<MetricsReport> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();)
      out[i] = train_and_select(jobs[i].strategy, data, jobs[i].lr, jobs[i].seed, options);
  };
  const std::size_t n = std::min(worker_threads(), jobs.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const DomainPair& prepared) {
  spec.validate();
  RunOptions options;
  options.model = spec.model;
  options.training = spec.training;

  ExperimentResult result;
  const auto wanted = [&](Strategy s) {
    return std::find(spec.strategies.begin(), spec.strategies.end(), s) != spec.strategies.end();
  };

  // Stage 1: grid-search every strategy whose parent is not being run.
  std::vector<Strategy> tuned;
  for (Strategy s : spec.strategies) {
    const auto parent = lr_parent(s);
    if (!parent || !wanted(*parent)) tuned.push_back(s);
  }
  std::vector<Job> grid;
  for (Strategy s : tuned)
    for (double lr : spec.lr_grid)
      for (std::uint64_t seed : spec.seeds) grid.push_back({s, seed, lr});
  result.grid_runs = run_jobs(grid, prepared, options);

  for (Strategy s : tuned) {
    double best_score = -1.0;
    for (double lr : spec.lr_grid) {
      std::vector<double> devs;
      for (const MetricsReport& r : result.grid_runs)
        if (r.strategy == s && r.lr == lr) devs.push_back(r.failed ? 0.0 : r.dev.f);
      const double m = mean(devs);
      if (m > best_score) {
        best_score = m;
        result.selected_lr[s] = lr;
      }
    }
  }

  // Stage 2: dependents reuse their parent's learning rate.
  std::vector<Job> inherited;
  for (Strategy s : spec.strategies)
    if (!result.selected_lr.contains(s)) {
      result.selected_lr[s] = result.selected_lr.at(*lr_parent(s));
      for (std::uint64_t seed : spec.seeds) inherited.push_back({s, seed, result.selected_lr[s]});
    }
  std::vector<MetricsReport> dependent = run_jobs(inherited, prepared, options);

  for (Strategy s : spec.strategies)
    for (std::uint64_t seed : spec.seeds) {
      const auto match = [&](const MetricsReport& r) {
        return r.strategy == s && r.seed == seed && r.lr == result.selected_lr[s];
      };
      auto it = std::find_if(result.grid_runs.begin(), result.grid_runs.end(), match);
      if (it == result.grid_runs.end())
        it = std::find_if(dependent.begin(), dependent.end(), match);
      result.reports.push_back(*it);
    }

  // Summary rows relative to ANT of the same seed (or the first strategy).
  const Strategy reference = wanted(Strategy::kAnt) ? Strategy::kAnt : spec.strategies.front();
  const std::size_t batch = spec.training.batch_size;
  const std::size_t encoder =
      ModelParams::zeros(spec.model).group_scalars(ParamGroup::kEncoder);
  for (const MetricsReport& r : result.reports) {
    const auto ref = std::find_if(result.reports.begin(), result.reports.end(),
                                  [&](const MetricsReport& x) {
                                    return x.strategy == reference && x.seed == r.seed;
                                  });
    SummaryRow row{r.strategy, r.seed, r.dev.f, r.test.f, r.test.recall, r.test.precision,
                   r.epoch,    r.wall_ms, r.aux_state, 1.0, 1.0};
    if (r.strategy != reference) {
      row.rel_time = ref->wall_ms > 0.0 ? r.wall_ms / ref->wall_ms : 0.0;
      row.rel_state = resource_footprint(r.strategy, batch, spec.model.latent_dim, encoder) /
                      resource_footprint(reference, batch, spec.model.latent_dim, encoder);
    }
    result.summary.push_back(row);
  }

  const std::pair<Strategy, Strategy> pairs[] = {{Strategy::kLoant, Strategy::kAnt},
                                                 {Strategy::kMtlLo, Strategy::kMtl},
                                                 {Strategy::kAntMaml, Strategy::kAnt}};
  for (const auto& [treated, baseline] : pairs) {
    if (!wanted(treated) || !wanted(baseline)) continue;
    std::vector<double> a, b;
    for (std::uint64_t seed : spec.seeds)
      for (const MetricsReport& r : result.reports) {
        if (r.seed != seed) continue;
        if (r.strategy == treated) a.push_back(r.test.f);
        if (r.strategy == baseline) b.push_back(r.test.f);
      }
    Comparison c{treated, baseline, mean(a) - mean(b), paired_sign_test(a, b)};
    result.comparisons.push_back(c);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

std::string to_json_line(const MetricsReport& r) {
  ordered_json j;
  j["strategy"] = strategy_name(r.strategy);
  j["seed"] = r.seed;
  j["lr"] = r.lr;
  j["dev"] = {{"F", r.dev.f}, {"R", r.dev.recall}, {"P", r.dev.precision}};
  j["test"] = {{"F", r.test.f}, {"R", r.test.recall}, {"P", r.test.precision}};
  j["epoch"] = r.epoch;
  j["wall_ms"] = r.wall_ms;
  j["aux_state"] = r.aux_state;
  j["failed"] = r.failed;
  if (r.failed) j["error"] = r.error;
  return j.dump();
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "strategy,seed,devF,testF,testR,testP,epoch,wall_ms,aux_state,rel_time,rel_state\n";
  for (const SummaryRow& r : rows) {
    char rel[64];
    std::snprintf(rel, sizeof rel, "%.2f,%.2f", r.rel_time, r.rel_state);
    os << strategy_name(r.strategy) << ',' << r.seed << ',' << num(r.dev_f) << ','
       << num(r.test_f) << ',' << num(r.test_r) << ',' << num(r.test_p) << ',' << r.epoch << ','
       << num(r.wall_ms) << ',' << r.aux_state << ',' << rel << '\n';
  }
  return os.str();
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "runs");
  {
    std::ofstream os(dir / "reports.jsonl");
    for (const MetricsReport& r : result.reports) os << to_json_line(r) << '\n';
  }
  {
    std::ofstream os(dir / "summary.csv");
    os << summary_csv(result.summary);
  }
  {
    std::ofstream os(dir / "comparisons.csv");
    os << "treated,baseline,mean_diff_testF,wins,losses,ties,sign_test_p\n";
    for (const Comparison& c : result.comparisons)
      os << strategy_name(c.treated) << ',' << strategy_name(c.baseline) << ','
         << num(c.mean_diff) << ',' << c.test.wins << ',' << c.test.losses << ',' << c.test.ties
         << ',' << num(c.test.p_value) << '\n';
  }
  for (const MetricsReport& r : result.reports) {
    std::string name(strategy_name(r.strategy));
    std::replace(name.begin(), name.end(), '+', '_');
    std::ofstream os(dir / "runs" / (name + "_seed" + std::to_string(r.seed) + ".jsonl"));
    for (const EpochReport& e : r.epochs) os << to_json_line(e) << '\n';
  }
}

}  // namespace loant
