#include "p2/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "p2/batch.hpp"
#include "p2/io.hpp"
#include "p2/oracle.hpp"
#include "p2/training.hpp"

namespace p2 {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Options {
  // inputs
  std::string corpus;
  std::string vocab;
  std::string dist;
  std::string config_file;
  std::string x0;
  // denoiser
  std::string denoiser = "exact";
  double lambda = 0.0;
  double temperature = 1.0;
  std::string unmasked_mode = "leave-one-out";
  double scorer_lambda = 0.0;
  double scorer_temperature = 1.0;
  // sampler
  std::string preset = "p2-self";
  double eta = 1.0;
  std::string score_domain = "probability";
  std::string kappa = "one-per-step";
  int steps = 0;
  std::string z_mode = "categorical";
  std::string sampler = "p2";
  int gillespie_iterations = 0;
  bool gillespie_exact = false;
  // run
  long n_samples = 1000;
  std::uint64_t seed = 0;
  std::string out = "runs";
  int threads = 0;
  int trajectory_chains = 0;
  // trained planner
  std::string model;
  bool trained_masked = false;
  int train_steps = 200;
  double lr = 0.1;
  int held_out_every = 25;
  int held_out_draws = 256;
  bool unrestricted_mp = false;
  // elbo
  long n_mc = 10000;
  bool raw_z = false;
  // evaluate
  std::string sweep_eta;
  std::string sweep_steps;
  // oracle-check
  long check_samples = 50000;
};

void add_input_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--corpus", o.corpus, "corpus text file (one sequence per line)");
  cmd->add_option("--vocab", o.vocab, "vocabulary file (one symbol per line, <mask> last)");
  cmd->add_option("--dist", o.dist, "distribution JSON produced by ingest");
  cmd->add_option("--config", o.config_file, "flat key=value config file; command line wins");
}

// Flat key=value config file, applied as defaults: every key is appended as
// --key=value unless the flag already appears on the command line.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error("config file line " + std::to_string(line_no) +
                         ": expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string flag = "--" + key;
    bool on_cli = false;
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) on_cli = true;
    if (!on_cli) args.push_back(flag + "=" + line.substr(eq + 1));
  }
  return args;
}

void add_denoiser_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--denoiser", o.denoiser, "exact | corrupted")
      ->check(CLI::IsMember({"exact", "corrupted"}));
  cmd->add_option("--lambda", o.lambda, "uniform-mixing weight of the corrupted denoiser");
  cmd->add_option("--temperature", o.temperature, "temperature of the corrupted denoiser");
  cmd->add_option("--unmasked-mode", o.unmasked_mode, "leave-one-out | dirac")
      ->check(CLI::IsMember({"leave-one-out", "dirac"}));
  cmd->add_option("--scorer-lambda", o.scorer_lambda, "corruption of the external scorer");
  cmd->add_option("--scorer-temperature", o.scorer_temperature, "temperature of the external scorer");
}

void add_sampler_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--preset", o.preset,
                  "ancestral | greedy | dfm | rdm | ddpd | p2-self | p2-external | p2-trained");
  cmd->add_option("--eta", o.eta, "stochasticity strength (rows with control only)");
  cmd->add_option("--score-domain", o.score_domain, "probability | log")
      ->check(CLI::IsMember({"probability", "log"}));
  cmd->add_option("--kappa", o.kappa, "one-per-step | normalized")
      ->check(CLI::IsMember({"one-per-step", "normalized"}));
  cmd->add_option("--steps", o.steps, "sampler steps (0 = sequence length)");
  cmd->add_option("--z-mode", o.z_mode, "categorical | greedy")
      ->check(CLI::IsMember({"categorical", "greedy"}));
  cmd->add_option("--sampler", o.sampler, "p2 | gillespie-mdm | gillespie-p2")
      ->check(CLI::IsMember({"p2", "gillespie-mdm", "gillespie-p2"}));
  cmd->add_option("--gillespie-iterations", o.gillespie_iterations,
                  "jump steps for gillespie-p2 (0 = sequence length)");
  cmd->add_flag("--gillespie-exact", o.gillespie_exact,
                "draw jumps from the enumerated one-jump law (tiny spaces only)");
  cmd->add_option("--model", o.model, "trained planner model JSON (p2-trained)");
  cmd->add_flag("--trained-masked", o.trained_masked,
                "use the trained model for masked scores as well");
}

void add_run_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--n-samples", o.n_samples, "number of chains to sample");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output root directory");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd->add_option("--trajectory-chains", o.trajectory_chains,
                  "dump step traces for the first N chains");
}

std::map<std::string, std::string> resolved_config(const std::string& cmd, const Options& o) {
  std::map<std::string, std::string> kv;
  kv["cmd"] = cmd;
  kv["corpus"] = o.corpus;
  kv["vocab"] = o.vocab;
  kv["dist"] = o.dist;
  kv["x0"] = o.x0;
  kv["denoiser"] = o.denoiser;
  kv["lambda"] = fmt_double(o.lambda);
  kv["temperature"] = fmt_double(o.temperature);
  kv["unmasked_mode"] = o.unmasked_mode;
  kv["scorer_lambda"] = fmt_double(o.scorer_lambda);
  kv["scorer_temperature"] = fmt_double(o.scorer_temperature);
  kv["preset"] = o.preset;
  kv["eta"] = fmt_double(o.eta);
  kv["score_domain"] = o.score_domain;
  kv["kappa"] = o.kappa;
  kv["steps"] = std::to_string(o.steps);
  kv["z_mode"] = o.z_mode;
  kv["sampler"] = o.sampler;
  kv["gillespie_iterations"] = std::to_string(o.gillespie_iterations);
  kv["gillespie_exact"] = o.gillespie_exact ? "1" : "0";
  kv["n_samples"] = std::to_string(o.n_samples);
  kv["seed"] = std::to_string(o.seed);
  kv["model"] = o.model;
  kv["trained_masked"] = o.trained_masked ? "1" : "0";
  kv["train_steps"] = std::to_string(o.train_steps);
  kv["lr"] = fmt_double(o.lr);
  kv["held_out_every"] = std::to_string(o.held_out_every);
  kv["held_out_draws"] = std::to_string(o.held_out_draws);
  kv["restricted_mp"] = o.unrestricted_mp ? "0" : "1";
  kv["n_mc"] = std::to_string(o.n_mc);
  kv["substitute_truth"] = o.raw_z ? "0" : "1";
  kv["sweep_eta"] = o.sweep_eta;
  kv["sweep_steps"] = o.sweep_steps;
  kv["check_samples"] = std::to_string(o.check_samples);
  return kv;
}

ordered_json config_json(const std::map<std::string, std::string>& kv) {
  ordered_json j;
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

// Run directory named by the config hash. The output root and thread count
// are execution knobs: they appear in config.resolved.txt but stay out of
// the hash and out of the config embedded in result files, so reruns in a
// different location stay byte-identical.
fs::path make_run_dir(const std::string& cmd, const Options& o,
                      std::map<std::string, std::string>& kv_out) {
  kv_out = resolved_config(cmd, o);
  std::string hash = config_hash(kv_out);
  fs::path dir = fs::path(o.out) / (cmd + "-" + hash);
  fs::create_directories(dir);
  std::ofstream cfg(dir / "config.resolved.txt");
  auto full = kv_out;
  full["threads"] = std::to_string(o.threads);
  full["out"] = o.out;
  for (const auto& [k, v] : full) cfg << k << "=" << v << "\n";
  return dir;
}

void append_log(const fs::path& dir, const std::string& message) {
  std::ofstream log(dir / "run.log", std::ios::app);
  auto now = std::chrono::system_clock::now();
  log << std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count()
      << " " << message << "\n";
}

struct Bundle {
  Vocabulary vocab{2};
  std::shared_ptr<EmpiricalDistribution> dist;
  std::shared_ptr<const Denoiser> denoiser;
  std::shared_ptr<const ExternalScorer> scorer;
  std::shared_ptr<const TrainablePlannerModel> model;
  std::shared_ptr<const ExactDenoiser> exact;  // for diagnostics
};

Bundle load_bundle(const Options& o, bool need_scorer, bool need_model) {
  Bundle b;
  if (!o.dist.empty()) {
    auto [dist, vocab] = load_distribution(o.dist);
    b.vocab = vocab;
    b.dist = std::make_shared<EmpiricalDistribution>(std::move(dist));
  } else if (!o.corpus.empty() && !o.vocab.empty()) {
    b.vocab = load_vocabulary(o.vocab);
    b.dist = std::make_shared<EmpiricalDistribution>(ingest_corpus(o.corpus, b.vocab));
  } else {
    throw config_error("provide either --dist or both --corpus and --vocab");
  }

  UnmaskedMode mode =
      o.unmasked_mode == "dirac" ? UnmaskedMode::kDirac : UnmaskedMode::kLeaveOneOut;
  b.exact = std::make_shared<ExactDenoiser>(b.dist, b.vocab, mode);
  b.denoiser = b.exact;
  if (o.denoiser == "corrupted")
    b.denoiser = corrupt(b.denoiser, CorruptionSpec{o.lambda, o.temperature});

  if (need_scorer) {
    std::shared_ptr<const Denoiser> base =
        std::make_shared<ExactDenoiser>(b.dist, b.vocab, UnmaskedMode::kLeaveOneOut);
    if (o.scorer_lambda > 0.0 || o.scorer_temperature != 1.0)
      base = corrupt(base, CorruptionSpec{o.scorer_lambda, o.scorer_temperature});
    b.scorer = std::make_shared<LeaveOneOutScorer>(base);
  }
  if (need_model) {
    if (o.model.empty()) throw config_error("preset p2-trained requires --model");
    b.model = std::make_shared<TrainablePlannerModel>(load_planner_model(o.model));
  }
  return b;
}

bool preset_needs_scorer(const std::string& name) {
  const PresetInfo& info = preset(name);
  return info.masked_rule == ScoreRule::kScorerConfidence ||
         info.keep_rule == ScoreRule::kScorerConfidence;
}

bool preset_needs_model(const std::string& name) {
  const PresetInfo& info = preset(name);
  return info.masked_rule == ScoreRule::kTrainedModel ||
         info.keep_rule == ScoreRule::kTrainedModel;
}

SamplerConfig build_sampler_config(const Options& o, const Bundle& b, double eta, int steps) {
  SamplerConfig cfg = preset_config(o.preset, b.denoiser, b.scorer, b.model,
                                    b.dist->length(), o.seed, eta);
  if (o.trained_masked && preset_needs_model(o.preset)) {
    const PresetInfo& info = preset(o.preset);
    PresetInfo patched = info;
    patched.masked_rule = ScoreRule::kTrainedModel;
    cfg.planner = make_preset_planner(patched, b.denoiser, b.scorer, b.model);
    cfg.preset.clear();  // no longer the registry row
  }
  cfg.comb.domain = o.score_domain == "log" ? ScoreDomain::kLog : ScoreDomain::kProbability;
  cfg.z_mode = o.z_mode == "greedy" ? ZDrawMode::kGreedy : ZDrawMode::kCategorical;
  int L = b.dist->length();
  cfg.steps = steps > 0 ? steps : L;
  if (o.kappa == "normalized" || cfg.steps != L)
    cfg.kappa = KappaSchedule::normalized(L, cfg.steps);
  else
    cfg.kappa = KappaSchedule::one_per_step(L);
  return cfg;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

Sequence parse_sequence(const std::string& text, const Vocabulary& vocab) {
  std::istringstream ss(text);
  Sequence seq;
  std::string word;
  while (ss >> word) {
    auto tok = vocab.token_of(word);
    if (!tok) throw config_error("--x0: unknown symbol '" + word + "'");
    seq.push_back(*tok);
  }
  if (seq.empty()) throw config_error("--x0: empty sequence");
  return seq;
}

struct SampleRun {
  BatchResult batch;
  DistributionComparison cmp;
  double eta_effective = 1.0;
};

SampleRun run_sampler(const Options& o, const Bundle& b, double eta, int steps) {
  SampleRun run;
  if (o.sampler == "gillespie-mdm") {
    run.batch = gillespie_mdm_batch(*b.denoiser, static_cast<int>(o.n_samples), o.seed, o.threads);
  } else if (o.sampler == "gillespie-p2") {
    SamplerConfig cfg = build_sampler_config(o, b, eta, steps);
    run.eta_effective = cfg.comb.eta;
    int iters = o.gillespie_iterations > 0 ? o.gillespie_iterations : b.dist->length();
    run.batch = gillespie_p2_batch(
        *b.denoiser, *cfg.planner, iters, static_cast<int>(o.n_samples), o.seed,
        o.gillespie_exact ? GillespieMode::kExact : GillespieMode::kApproximate, o.threads);
  } else {
    SamplerConfig cfg = build_sampler_config(o, b, eta, steps);
    run.eta_effective = cfg.comb.eta;
    run.batch = sample_batch(cfg, *b.denoiser, static_cast<int>(o.n_samples), o.threads);
  }
  if (!run.batch.samples.empty()) run.cmp = compare_distributions(run.batch.samples, *b.dist);
  return run;
}

int cmd_ingest(const Options& o) {
  if (o.corpus.empty() || o.vocab.empty())
    throw config_error("ingest requires --corpus and --vocab");
  Vocabulary vocab = load_vocabulary(o.vocab);
  EmpiricalDistribution dist = ingest_corpus(o.corpus, vocab);

  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("ingest", o, kv);
  save_distribution(dist, vocab, (dir / "distribution.json").string());
  append_log(dir, "ingest complete");

  std::cout << "support_size=" << dist.support_size() << " L=" << dist.length()
            << " entropy=" << dist.entropy() << "\n"
            << "wrote " << (dir / "distribution.json").string() << "\n";
  return 0;
}

int cmd_sample(const Options& o) {
  Bundle b = load_bundle(o, preset_needs_scorer(o.preset), preset_needs_model(o.preset));
  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("sample", o, kv);

  auto start = std::chrono::steady_clock::now();
  SampleRun run = run_sampler(o, b, o.eta, o.steps);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_sequences(run.batch.samples, b.vocab, (dir / "samples.txt").string());

  ordered_json summary;
  summary["schema_version"] = "1";
  summary["config"] = config_json(kv);
  summary["n_samples"] = o.n_samples;
  summary["eta_effective"] = run.eta_effective;
  if (o.n_samples > 0) {
    summary["tv"] = run.cmp.tv;
    summary["kl"] = run.cmp.kl;
    summary["chi_square"] = std::isfinite(run.cmp.chi_square) ? run.cmp.chi_square : -1.0;
    summary["chi_p_value"] = run.cmp.chi_p_value;
    summary["off_support_mass"] = run.cmp.off_support_mass;
  }
  summary["remask_events"] = run.batch.diag.remask_events;
  summary["zero_score_fallbacks"] = run.batch.diag.zero_score_fallbacks;
  summary["residual_masks"] = run.batch.diag.residual_masks;
  summary["off_support_queries"] = b.exact->off_support_queries();
  std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";

  if (o.trajectory_chains > 0 && o.sampler == "p2") {
    SamplerConfig cfg = build_sampler_config(o, b, o.eta, o.steps);
    std::vector<std::pair<Sequence, Trajectory>> chains;
    RandomStream root(o.seed);
    int n = std::min<long>(o.trajectory_chains, o.n_samples);
    for (int c = 0; c < n; ++c) {
      RandomStream rng = root.child(static_cast<std::uint64_t>(c));
      chains.push_back(p2_sample(cfg, *b.denoiser, rng, nullptr, true));
    }
    save_trajectory_jsonl(chains, b.vocab, (dir / "trajectory.jsonl").string());
  }

  append_log(dir, "sample complete runtime_s=" + fmt_double(secs));
  std::cout << "run_dir=" << dir.string() << " tv=" << (o.n_samples > 0 ? run.cmp.tv : 0.0)
            << " remask_events=" << run.batch.diag.remask_events << "\n";
  return 0;
}

int cmd_train_planner(const Options& o) {
  Bundle b = load_bundle(o, false, false);
  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("train-planner", o, kv);

  TrainPlannerConfig cfg;
  cfg.steps = o.train_steps;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.held_out_every = o.held_out_every;
  cfg.held_out_draws = o.held_out_draws;
  cfg.options.restricted_mp = !o.unrestricted_mp;

  TrainPlannerResult result = train_planner(*b.dist, *b.denoiser, cfg);
  result.model.trained_on = "corpus-" + config_hash({{"corpus", o.corpus},
                                                     {"dist", o.dist},
                                                     {"denoiser", o.denoiser},
                                                     {"lambda", fmt_double(o.lambda)},
                                                     {"temperature", fmt_double(o.temperature)}});
  save_planner_model(result.model, (dir / "model.json").string());

  std::ofstream csv(dir / "loss.csv");
  csv << "# schema_version=1 config_hash=" << config_hash(resolved_config("train-planner", o))
      << "\n";
  csv << "step,loss,held_out_loss\n";
  for (const LossPoint& p : result.curve) {
    csv << p.step << "," << fmt_double(p.loss) << ",";
    if (p.held_out) csv << fmt_double(*p.held_out);
    csv << "\n";
  }

  double first = result.curve.front().held_out.value_or(0.0);
  double last = 0.0;
  for (const LossPoint& p : result.curve)
    if (p.held_out) last = *p.held_out;
  append_log(dir, "train complete");
  std::cout << "run_dir=" << dir.string() << " held_out_first=" << first
            << " held_out_last=" << last << "\n";
  return 0;
}

ElboEstimate run_elbo(const Options& o, const Bundle& b, double eta) {
  SamplerConfig cfg = build_sampler_config(o, b, eta, o.steps);
  ElboOptions opts;
  opts.substitute_truth = !o.raw_z;
  opts.threads = o.threads == 0 ? -1 : o.threads;
  NoiseSchedule schedule = NoiseSchedule::linear();
  if (!o.x0.empty())
    return estimate_elbo(parse_sequence(o.x0, b.vocab), *b.denoiser, *cfg.planner, schedule,
                         o.n_mc, o.seed, opts);
  return estimate_elbo(*b.dist, *b.denoiser, *cfg.planner, schedule, o.n_mc, o.seed, opts);
}

int cmd_elbo(const Options& o) {
  Bundle b = load_bundle(o, preset_needs_scorer(o.preset), preset_needs_model(o.preset));
  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("elbo", o, kv);

  ElboEstimate est = run_elbo(o, b, o.eta);

  ordered_json j;
  j["schema_version"] = "1";
  j["config"] = config_json(kv);
  j["e_mp"] = est.e_mp;
  j["e_up"] = est.e_up;
  j["e_d"] = est.e_d;
  j["total"] = est.total;
  j["se_mp"] = est.se_mp;
  j["se_up"] = est.se_up;
  j["se_d"] = est.se_d;
  j["se_total"] = est.se_total;
  j["n_mc"] = est.n_mc;
  j["floored_logs"] = est.floored_logs;
  j["max_draw_mp_plus_up"] = est.max_draw_mp_plus_up;
  std::ofstream(dir / "elbo.json") << j.dump(2) << "\n";

  append_log(dir, "elbo complete");
  std::cout << "run_dir=" << dir.string() << " e_mp=" << est.e_mp << " e_up=" << est.e_up
            << " e_d=" << est.e_d << " total=" << est.total << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  bool eta_sweep = !o.sweep_eta.empty();
  bool steps_sweep = !o.sweep_steps.empty();
  if (eta_sweep == steps_sweep)
    throw config_error("evaluate needs exactly one of --sweep-eta or --sweep-steps");
  std::vector<double> points = parse_double_list(eta_sweep ? o.sweep_eta : o.sweep_steps);
  if (points.empty()) throw config_error("empty sweep list");

  Bundle b = load_bundle(o, preset_needs_scorer(o.preset), preset_needs_model(o.preset));
  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("evaluate", o, kv);

  ordered_json plot;
  plot["schema_version"] = "1";
  plot["config"] = config_json(kv);
  plot["x_label"] = eta_sweep ? "eta" : "steps";
  plot["x"] = points;
  std::vector<double> tv_series, kl_series, remask_series, emp_series, eup_series, ed_series,
      total_series;

  std::ofstream csv(dir / "results.csv");
  csv << "# schema_version=1 config_hash=" << config_hash(resolved_config("evaluate", o)) << "\n";
  csv << (eta_sweep ? "eta" : "steps")
      << ",eta_effective,tv,kl,remask_rate,e_mp,e_up,e_d,elbo_total\n";

  for (double point : points) {
    double eta = eta_sweep ? point : o.eta;
    int steps = steps_sweep ? static_cast<int>(point) : o.steps;
    Options run_opts = o;
    run_opts.steps = steps;
    if (steps_sweep && o.sampler == "gillespie-p2")
      run_opts.gillespie_iterations = static_cast<int>(point);
    SampleRun run = run_sampler(run_opts, b, eta, steps);
    ElboEstimate est = run_elbo(run_opts, b, eta);
    double remask_rate =
        o.n_samples > 0 ? static_cast<double>(run.batch.diag.remask_events) / o.n_samples : 0.0;

    csv << fmt_double(point) << "," << fmt_double(run.eta_effective) << ","
        << fmt_double(run.cmp.tv) << "," << fmt_double(run.cmp.kl) << ","
        << fmt_double(remask_rate) << "," << fmt_double(est.e_mp) << "," << fmt_double(est.e_up)
        << "," << fmt_double(est.e_d) << "," << fmt_double(est.total) << "\n";
    tv_series.push_back(run.cmp.tv);
    kl_series.push_back(run.cmp.kl);
    remask_series.push_back(remask_rate);
    emp_series.push_back(est.e_mp);
    eup_series.push_back(est.e_up);
    ed_series.push_back(est.e_d);
    total_series.push_back(est.total);
  }

  plot["series"]["tv"] = tv_series;
  plot["series"]["kl"] = kl_series;
  plot["series"]["remask_rate"] = remask_series;
  plot["series"]["e_mp"] = emp_series;
  plot["series"]["e_up"] = eup_series;
  plot["series"]["e_d"] = ed_series;
  plot["series"]["elbo_total"] = total_series;
  plot["labels"]["tv"] = "total variation to corpus";
  plot["labels"]["kl"] = "KL(empirical || corpus)";
  plot["labels"]["remask_rate"] = "remask events per chain";
  std::ofstream(dir / "plot.json") << plot.dump(2) << "\n";

  append_log(dir, "evaluate complete");
  std::cout << "run_dir=" << dir.string() << " points=" << points.size() << "\n";
  return 0;
}

int cmd_oracle_check(const Options& o) {
  Bundle b = load_bundle(o, false, false);
  std::map<std::string, std::string> kv;
  fs::path dir = make_run_dir("oracle-check", o, kv);

  const Denoiser& den = *b.denoiser;
  const EmpiricalDistribution& dist = *b.dist;
  int L = dist.length();
  bool all_pass = true;

  ordered_json report;
  report["schema_version"] = "1";
  report["config"] = config_json(kv);
  report["seed"] = o.seed;

  // Order-average identity vs empirical unmask-order sampling.
  {
    ordered_json check;
    if (L <= 6) {
      long n = o.check_samples;
      BatchResult batch = gillespie_mdm_batch(den, static_cast<int>(n), o.seed, o.threads);
      DistributionComparison cmp = compare_distributions(batch.samples, dist);
      bool pass = true;
      ordered_json rows = ordered_json::array();
      double oracle_total = 0.0;
      for (int i = 0; i < dist.support_size(); ++i) {
        double oracle = order_average_probability(den, dist.support()[i]);
        oracle_total += oracle;
        double emp = cmp.empirical[i];
        double sigma = std::sqrt(std::max(oracle * (1.0 - oracle), 1e-12) / n);
        bool ok = std::abs(emp - oracle) <= 3.0 * sigma;
        pass = pass && ok;
        ordered_json row;
        row["oracle"] = oracle;
        row["empirical"] = emp;
        row["sigma"] = sigma;
        row["pass"] = ok;
        rows.push_back(std::move(row));
      }
      double off_oracle = 1.0 - oracle_total;
      double off_sigma = std::sqrt(std::max(off_oracle * (1.0 - off_oracle), 1e-12) / n);
      bool off_ok = std::abs(cmp.off_support_mass - off_oracle) <= 3.0 * off_sigma;
      pass = pass && off_ok;
      check["per_support"] = std::move(rows);
      check["off_support_oracle"] = off_oracle;
      check["off_support_empirical"] = cmp.off_support_mass;
      check["pass"] = pass;
      all_pass = all_pass && pass;
    } else {
      check["skipped"] = "L > 6";
    }
    report["order_average"] = std::move(check);
  }

  // Rate-matrix columns vs the enumerated one-jump law.
  {
    ordered_json check;
    double states = std::pow(static_cast<double>(b.vocab.size()), L);
    if (states <= 256.0) {
      auto planner = self_planner(b.denoiser);
      RateMatrix q = build_p2_rate_structure(den, *planner);
      double max_gap = 0.0;
      double max_col = 0.0;
      for (int xi = 0; xi < q.space.size(); ++xi) {
        max_col = std::max(max_col, std::abs(q.column_sum(xi)));
        auto col = q.normalized_column(xi);
        if (!col) continue;
        JumpLaw law = p2_jump_law(den, *planner, q.space.state(xi));
        for (int y = 0; y < q.space.size(); ++y)
          max_gap = std::max(max_gap, std::abs((*col)[y] - law.state_prob[y]));
      }
      bool pass = max_gap <= 1e-9 && max_col <= 1e-9;
      check["max_column_sum"] = max_col;
      check["max_jump_law_gap"] = max_gap;
      check["pass"] = pass;
      all_pass = all_pass && pass;
    } else {
      check["skipped"] = "state space too large";
    }
    report["rate_matrix"] = std::move(check);
  }

  // Kolmogorov integration of the masked-diffusion generator from all-mask.
  {
    ordered_json check;
    double states = std::pow(static_cast<double>(b.vocab.size()), L);
    if (states <= 256.0) {
      RateMatrix q = build_mdm_rate_structure(den);
      std::vector<double> p0(q.space.size(), 0.0);
      p0[q.space.index_of(Sequence(L, b.vocab.mask_id()))] = 1.0;
      KolmogorovResult res = kolmogorov_check(q, std::move(p0), 16.0, 1e-3);
      double max_gap = 0.0;
      for (int i = 0; i < dist.support_size(); ++i) {
        double oracle = order_average_probability(den, dist.support()[i]);
        double integrated = res.terminal[q.space.index_of(dist.support()[i])];
        max_gap = std::max(max_gap, std::abs(oracle - integrated));
      }
      bool pass = max_gap <= 1e-4 && res.max_norm_defect < 1e-6 && res.min_probability > -1e-6;
      check["max_terminal_gap"] = max_gap;
      check["max_norm_defect"] = res.max_norm_defect;
      check["min_probability"] = res.min_probability;
      check["pass"] = pass;
      all_pass = all_pass && pass;
    } else {
      check["skipped"] = "state space too large";
    }
    report["kolmogorov"] = std::move(check);
  }

  report["pass"] = all_pass;
  std::ofstream(dir / "report.json") << report.dump(2) << "\n";
  append_log(dir, "oracle-check complete");
  std::cout << "run_dir=" << dir.string() << " pass=" << (all_pass ? "true" : "false") << "\n";
  if (!all_pass) throw invariant_error("oracle-check failed; see report.json");
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"masked-diffusion sampling engine with inference-time planners"};
  app.require_subcommand(1);
  Options o;

  CLI::App* ingest = app.add_subcommand("ingest", "build a distribution file from a corpus");
  add_input_options(ingest, o);
  ingest->add_option("--out", o.out, "output root directory");
  ingest->add_option("--seed", o.seed, "random seed (recorded only)");

  CLI::App* sample = app.add_subcommand("sample", "draw sequences with a sampler preset");
  add_input_options(sample, o);
  add_denoiser_options(sample, o);
  add_sampler_options(sample, o);
  add_run_options(sample, o);

  CLI::App* train = app.add_subcommand("train-planner", "fit the logistic planner, denoiser frozen");
  add_input_options(train, o);
  add_denoiser_options(train, o);
  train->add_option("--train-steps", o.train_steps, "SGD steps");
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--held-out-every", o.held_out_every, "held-out evaluation cadence");
  train->add_option("--held-out-draws", o.held_out_draws, "held-out evaluation draws");
  train->add_flag("--unrestricted-mp", o.unrestricted_mp,
                  "train masked positions on all labels, not only agreement hits");
  train->add_option("--seed", o.seed, "random seed");
  train->add_option("--out", o.out, "output root directory");

  CLI::App* elbo = app.add_subcommand("elbo", "Monte Carlo bound estimate");
  add_input_options(elbo, o);
  add_denoiser_options(elbo, o);
  add_sampler_options(elbo, o);
  add_run_options(elbo, o);
  elbo->add_option("--n-mc", o.n_mc, "Monte Carlo draws");
  elbo->add_flag("--raw-z", o.raw_z, "query planner at the raw denoiser draw");
  elbo->add_option("--x0", o.x0, "single clean sequence (symbol names); default averages the corpus");

  CLI::App* evaluate = app.add_subcommand("evaluate", "sweep eta or steps and tabulate metrics");
  add_input_options(evaluate, o);
  add_denoiser_options(evaluate, o);
  add_sampler_options(evaluate, o);
  add_run_options(evaluate, o);
  evaluate->add_option("--sweep-eta", o.sweep_eta, "comma-separated eta values");
  evaluate->add_option("--sweep-steps", o.sweep_steps, "comma-separated step counts");
  evaluate->add_option("--n-mc", o.n_mc, "Monte Carlo draws for the bound terms");

  CLI::App* oracle = app.add_subcommand("oracle-check", "run the exact-oracle consistency suite");
  add_input_options(oracle, o);
  add_denoiser_options(oracle, o);
  add_run_options(oracle, o);
  oracle->add_option("--check-samples", o.check_samples, "draws for the empirical comparison");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = apply_config_file(std::move(args));
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    // CLI11 consumes arguments in reverse order.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(o);
    if (sample->parsed()) return cmd_sample(o);
    if (train->parsed()) return cmd_train_planner(o);
    if (elbo->parsed()) return cmd_elbo(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (oracle->parsed()) return cmd_oracle_check(o);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const precondition_error& e) {
    std::cerr << "precondition error: " << e.what() << "\n";
    return 3;
  } catch (const invariant_error& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace p2
