// Command-line front end: dataset generation and inspection, the quadratic
// playground, single training runs and multi-seed comparisons.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "CLI11.hpp"
#include "loant/checkpoint.hpp"
#include "loant/harness.hpp"
#include "loant/kernels.hpp"
#include "loant/quadratic.hpp"

namespace {

using namespace loant;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << text;
}

quad::Vec2 parse_point(const std::string& s) {
  double x = 0, y = 0;
  char comma = 0;
  std::istringstream is(s);
  if (!(is >> x >> comma >> y) || comma != ',') throw Error("expected x,y but got '" + s + "'");
  return {x, y};
}

struct GenArgs {
  std::string out_source, out_target;
  std::uint64_t seed = 1;
  double cue_share = GeneratorConfig{}.cue_share;
  double signal_rate = GeneratorConfig{}.signal_rate;
  double target_rate = GeneratorConfig{}.target_positive_rate;
  std::size_t vocab = 3000;
};

struct QuadArgs {
  double eta = 0.025, gamma = 0.01;
  std::vector<std::string> methods{"gd"};
  std::size_t steps = 200;
  std::string start = "0,-0.15";
  std::string out_svg, out_csv;
};

struct TrainArgs {
  std::string source, target, log, checkpoint;
  std::string strategy = "LOANT";
  double lr = 1e-2, gamma = 1.0;
  std::size_t epochs = 5, batch = 128;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 1;
};

int cmd_gen(const GenArgs& a) {
  GeneratorConfig cfg = GeneratorConfig::with_token_sets(a.vocab, 20, 20, 200);
  cfg.seed = a.seed;
  cfg.cue_share = a.cue_share;
  cfg.signal_rate = a.signal_rate;
  cfg.target_positive_rate = a.target_rate;
  const DomainPair pair = generate_domain_pair(cfg);
  save_dataset(a.out_source, pair.source);
  save_dataset(a.out_target, pair.target);
  std::printf("source %zu examples, target %zu examples, kl %.6f\n", pair.source.examples.size(),
              pair.target.examples.size(), unigram_kl(pair.source, pair.target));
  return 0;
}

int cmd_stats(const std::vector<std::string>& paths) {
  std::printf("%-24s %8s %8s %8s %8s\n", "dataset", "train", "dev", "test", "pos%");
  for (const std::string& p : paths) {
    const DomainDataset d = load_dataset(p);
    std::printf("%-24s %8zu %8zu %8zu %8.2f\n", d.domain.c_str(), d.count(Split::kTrain),
                d.count(Split::kDev), d.count(Split::kTest), 100.0 * d.positive_rate());
  }
  return 0;
}

int cmd_quad(const QuadArgs& a) {
  const quad::Quadratic q = quad::Quadratic::reconstructed_default();
  const quad::Vec2 start = parse_point(a.start);
  std::vector<quad::Trajectory> runs;
  for (const std::string& m : a.methods) {
    quad::Trajectory t = quad::run(q, quad::parse_method(m), start, a.eta, a.gamma, a.steps);
    const std::size_t k = t.steps_to_converge();
    std::printf("%-4s eta=%g gamma=%g  f_end=%.6g  ", m.c_str(), a.eta, a.gamma, t.values.back());
    if (t.diverged)
      std::printf("diverged\n");
    else if (k == std::string::npos)
      std::printf("not converged in %zu steps\n", t.steps());
    else
      std::printf("converged at step %zu\n", k);
    runs.push_back(std::move(t));
  }
  std::printf("condition number %.6f (reconstructed quadratic)\n", q.condition_number());
  if (!a.out_svg.empty()) write_file(a.out_svg, quad::render_svg(q, runs));
  if (!a.out_csv.empty()) write_file(a.out_csv, quad::render_csv(runs));
  return 0;
}

DomainPair load_or_generate(const std::string& source, const std::string& target,
                            std::uint64_t data_seed) {
  if (source.empty() != target.empty()) throw Error("give both --source and --target");
  if (source.empty()) {
    GeneratorConfig cfg = GeneratorConfig::defaults();
    cfg.seed = data_seed;
    return generate_domain_pair(cfg);
  }
  return DomainPair{load_dataset(source), load_dataset(target)};
}

int cmd_train(const TrainArgs& a) {
  const DomainPair data =
      prepare_pair(load_or_generate(a.source, a.target, a.data_seed), a.data_seed);
  RunOptions options;
  options.model.vocab_size = data.source.vocab_size;
  options.training.gamma = a.gamma;
  options.training.epochs = a.epochs;
  options.training.batch_size = a.batch;
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw Error("cannot write " + a.log);
  }
  options.on_epoch = [&](const EpochReport& e) {
    std::printf("epoch %zu  L_s %.4f  L_t %.4f  L_d %.4f  %.0f ms\n", e.epoch, e.mean.source,
                e.mean.target, e.mean.domain, e.wall_ms);
    if (log.is_open()) log << to_json_line(e) << '\n';
  };
  ModelParams final_params;
  const MetricsReport r =
      train_and_select(parse_strategy(a.strategy), data, a.lr, a.seed, options, &final_params);
  std::cout << to_json_line(r) << '\n';
  if (r.failed) return 2;
  if (!a.checkpoint.empty()) save_checkpoint(a.checkpoint, final_params);
  return 0;
}

int cmd_compare(const std::string& spec_path, const std::string& out) {
  ExperimentSpec spec = ExperimentSpec::from_json(read_file(spec_path));
  if (!out.empty()) spec.output_dir = out;
  DomainPair raw = spec.generator ? generate_domain_pair(*spec.generator)
                                  : DomainPair{load_dataset(spec.source_path),
                                               load_dataset(spec.target_path)};
  const std::uint64_t prep_seed = spec.generator ? spec.generator->seed : 1;
  const DomainPair data = prepare_pair(raw, prep_seed);
  spec.model.vocab_size = std::max(spec.model.vocab_size, data.source.vocab_size);
  const ExperimentResult result = run_experiment(spec, data);
  write_experiment(result, spec.output_dir);

  for (const auto& [s, lr] : result.selected_lr)
    std::printf("%-13s lr %g\n", std::string(strategy_name(s)).c_str(), lr);
  for (Strategy s : spec.strategies) {
    std::vector<double> f;
    for (const SummaryRow& row : result.summary)
      if (row.strategy == s) f.push_back(row.test_f);
    std::printf("%-13s test F %.4f +- %.4f\n", std::string(strategy_name(s)).c_str(), mean(f),
                f.size() > 1 ? stddev(f) : 0.0);
  }
  for (const Comparison& c : result.comparisons)
    std::printf("%s vs %s: mean diff %+.4f  wins %zu losses %zu ties %zu  sign-test p %.4f\n",
                std::string(strategy_name(c.treated)).c_str(),
                std::string(strategy_name(c.baseline)).c_str(), c.mean_diff, c.test.wins,
                c.test.losses, c.test.ties, c.test.p_value);
  if (result.any_failed()) {
    std::fprintf(stderr, "some runs failed; see %s/reports.jsonl\n",
                 spec.output_dir.string().c_str());
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-optimized adversarial transfer toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic source/target dataset pair");
  g->add_option("--out-source", gen.out_source, "source dataset path")->required();
  g->add_option("--out-target", gen.out_target, "target dataset path")->required();
  g->add_option("--seed", gen.seed);
  g->add_option("--cue-share", gen.cue_share, "per-token probability of a domain token");
  g->add_option("--signal-rate", gen.signal_rate, "per-token probability of a shared signal token");
  g->add_option("--target-rate", gen.target_rate, "target positive rate");
  g->add_option("--vocab", gen.vocab);

  std::string kl_source, kl_target;
  auto* k = app.add_subcommand("kl", "unigram KL divergence of target from source");
  k->add_option("source", kl_source)->required();
  k->add_option("target", kl_target)->required();

  std::vector<std::string> stat_paths;
  auto* st = app.add_subcommand("stats", "split sizes and positive rates");
  st->add_option("datasets", stat_paths)->required();

  QuadArgs qa;
  auto* qc = app.add_subcommand("quad", "GD and extragradient on a 2-D quadratic");
  qc->add_option("--eta", qa.eta);
  qc->add_option("--gamma", qa.gamma);
  qc->add_option("--method", qa.methods, "gd, eg1 or eg2 (repeatable)")
      ->check(CLI::IsMember({"gd", "eg1", "eg2"}));
  qc->add_option("--steps", qa.steps);
  qc->add_option("--start", qa.start, "x,y");
  qc->add_option("--out-svg", qa.out_svg);
  qc->add_option("--out-csv", qa.out_csv);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train one strategy and keep the best dev epoch");
  tr->add_option("--source", ta.source);
  tr->add_option("--target", ta.target);
  tr->add_option("--strategy", ta.strategy);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--gamma", ta.gamma);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch", ta.batch);
  tr->add_option("--seed", ta.seed, "initialization and data-order seed");
  tr->add_option("--data-seed", ta.data_seed, "generator seed when no dataset is given");
  tr->add_option("--log", ta.log, "run-log JSONL");
  tr->add_option("--checkpoint", ta.checkpoint, "checkpoint JSON of the selected epoch");

  std::string spec_path, out_dir;
  auto* cmp = app.add_subcommand("compare", "multi-seed strategy comparison");
  cmp->add_option("--spec", spec_path)->required();
  cmp->add_option("--out", out_dir);

  std::string simd;
  app.add_option("--simd", simd, "kernel set: scalar or avx2 (default: best available)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (!simd.empty() && !kernels::select(simd)) throw Error("kernel set unavailable: " + simd);
    if (*g) return cmd_gen(gen);
    if (*k) {
      std::printf("%.9f\n", unigram_kl(load_dataset(kl_source), load_dataset(kl_target)));
      return 0;
    }
    if (*st) return cmd_stats(stat_paths);
    if (*qc) return cmd_quad(qa);
    if (*tr) return cmd_train(ta);
    if (*cmp) return cmd_compare(spec_path, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
