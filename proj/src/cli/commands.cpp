#include "cagsr/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "cagsr/autodiff/archive.hpp"
#include "cagsr/cli/config.hpp"
#include "cagsr/common/rng.hpp"
#include "cagsr/common/tokens.hpp"
#include "cagsr/data/stats.hpp"
#include "cagsr/eval/evaluate.hpp"
#include "cagsr/model/checkpoint.hpp"
#include "cagsr/model/trace_io.hpp"
#include "cagsr/rl/rollout.hpp"
#include "cagsr/rl/trainer.hpp"

#ifndef CAGSR_VERSION
#define CAGSR_VERSION "dev"
#endif
#ifndef CAGSR_BUILD_TYPE
#define CAGSR_BUILD_TYPE "unknown"
#endif

namespace cagsr::cli {

namespace fs = std::filesystem;

namespace {

// Bad invocation or missing input: exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kModelInitStream = 1;

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  RunConfig cfg;
  fs::path out;
};

void write_text(const fs::path& path, const std::string& text) {
  ad::write_file_atomic(path, text);
}

void write_json(const fs::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text(path, text);
}

Json env_stamp(const Invocation& inv) {
  Json j;
  j["program"] = "cagsr";
  j["version"] = CAGSR_VERSION;
  j["build_type"] = CAGSR_BUILD_TYPE;
#ifdef __VERSION__
  j["compiler"] = __VERSION__;
#endif
  j["cplusplus"] = static_cast<long>(__cplusplus);
  j["real_type"] = "float32";
  j["command"] = inv.command;
  j["argv"] = inv.argv;
  return j;
}

// Resolved config and environment stamp, written into every output directory.
void write_run_files(const Invocation& inv, const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(cfg));
  write_json(dir / "env.json", env_stamp(inv));
}

struct DataBundle {
  data::Vocabulary vocab;
  std::vector<data::TokenizedExample> train, valid, test;
  data::CorpusStats stats;

  const std::vector<data::TokenizedExample>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    return test;
  }
};

fs::path require_path(const std::string& value, const char* key) {
  if (value.empty()) throw UsageError(std::string(key) + " is required for this command");
  const fs::path p(value);
  if (!fs::exists(p)) throw UsageError(std::string(key) + ": " + value + " does not exist");
  return p;
}

DataBundle load_data(const RunConfig& cfg) {
  const fs::path dir = require_path(cfg.paths.data, "paths.data");
  for (const char* f : {"vocab.txt", "train.jsonl", "valid.jsonl", "test.jsonl"}) {
    if (!fs::exists(dir / f)) throw UsageError("paths.data: " + (dir / f).string() + " does not exist");
  }
  DataBundle b;
  b.vocab = data::Vocabulary::load(dir / "vocab.txt");
  b.train = data::tokenize_examples(data::read_dataset(dir / "train.jsonl"), b.vocab);
  b.valid = data::tokenize_examples(data::read_dataset(dir / "valid.jsonl"), b.vocab);
  b.test = data::tokenize_examples(data::read_dataset(dir / "test.jsonl"), b.vocab);
  if (b.train.empty()) throw UsageError("paths.data: training split is empty");
  b.stats = data::corpus_stats(data::prompts_of(b.train));
  return b;
}

model::PolicyModel initial_model(RunConfig& cfg, const DataBundle& data) {
  if (!cfg.paths.checkpoint.empty()) {
    const auto ar = ad::Archive::load(require_path(cfg.paths.checkpoint, "paths.checkpoint"));
    auto m = model::model_from_checkpoint<float>(ar);
    cfg.model = m.config();
    return m;
  }
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = data.vocab.size();
  cfg.model.validate();
  return model::PolicyModel(cfg.model, derive_seed(cfg.seed, kModelInitStream));
}

void check_vocab(const model::PolicyModel& m, const DataBundle& data) {
  if (m.config().vocab_size < data.vocab.size()) {
    throw UsageError("model vocab_size " + std::to_string(m.config().vocab_size) +
                     " is smaller than the vocabulary (" + std::to_string(data.vocab.size()) + ")");
  }
}

// ---- commands -------------------------------------------------------------

int cmd_make_data(Invocation& inv) {
  const auto& cfg = inv.cfg;
  const auto corpus = data::build_toy_corpus(cfg.data);
  const auto splits = data::split(corpus, cfg.split_ratios, cfg.split_seed);
  const auto vocab = data::Vocabulary::from_examples(corpus);
  write_run_files(inv, inv.out, cfg);
  data::write_dataset(inv.out / "train.jsonl", splits.train);
  data::write_dataset(inv.out / "valid.jsonl", splits.valid);
  data::write_dataset(inv.out / "test.jsonl", splits.test);
  vocab.save(inv.out / "vocab.txt");
  Json summary;
  summary["examples"] = corpus.size();
  summary["train"] = splits.train.size();
  summary["valid"] = splits.valid.size();
  summary["test"] = splits.test.size();
  summary["vocab_size"] = vocab.size();
  write_json(inv.out / "summary.json", summary);
  std::cout << "wrote " << corpus.size() << " examples (" << splits.train.size() << "/"
            << splits.valid.size() << "/" << splits.test.size() << "), vocabulary "
            << vocab.size() << " to " << inv.out.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(Invocation& inv) {
  auto& cfg = inv.cfg;
  const auto data = load_data(cfg);
  auto m = initial_model(cfg, data);
  check_vocab(m, data);
  write_run_files(inv, inv.out, cfg);
  std::vector<Json> rows;
  const fs::path metrics = inv.out / "metrics.jsonl";
  write_text(metrics, "");
  std::ofstream out(metrics, std::ios::app);
  data::pretrain_supervised(m, data.train, data.valid, cfg.pretrain, [&](const data::EpochReport& r) {
    Json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["valid_loss"] = r.valid_loss;
    out << j.dump() << "\n";
    out.flush();
    std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " valid " << r.valid_loss << "\n";
  });
  model::save_checkpoint<float>(inv.out / "final.ckpt", m);
  const auto report = eval::evaluate(m, data.valid, data.stats, resolve_reward(cfg, data.vocab));
  Json summary = eval::summary_json(report);
  summary["split"] = "valid";
  write_json(inv.out / "summary.json", summary);
  std::cout << "valid exact match " << report.exact_match << ", perplexity " << report.perplexity << "\n";
  return kExitOk;
}

Json train_summary(const rl::TrainResult& r) {
  Json j;
  j["start_iteration"] = r.start_iteration;
  j["iterations_run"] = r.metrics.size();
  j["heldout_mean_reward"] = r.heldout_mean_reward;
  j["heldout_count"] = r.heldout_count;
  return j;
}

// Trains one RL run into `dir`; resumes when dir already holds a checkpoint.
rl::TrainResult run_training(const Invocation& inv, const fs::path& dir, RunConfig cfg,
                             const DataBundle& data, model::PolicyModel& m) {
  const Json resolved = to_json(cfg);
  if (fs::exists(dir / "checkpoints" / "latest.ckpt") && fs::exists(dir / "config.json")) {
    std::ifstream in(dir / "config.json");
    const Json previous = Json::parse(in, nullptr, false);
    if (previous != resolved) {
      throw UsageError(dir.string() + " holds a run with a different resolved config; use a fresh --out");
    }
  }
  write_run_files(inv, dir, cfg);
  const auto reward_cfg = resolve_reward(cfg, data.vocab);
  const auto train_prompts = rl::make_rollout_prompts(data::prompts_of(data.train), data.stats, reward_cfg);
  const auto heldout = rl::make_rollout_prompts(data::prompts_of(data.valid), data.stats, reward_cfg);
  rl::TrainOptions opts;
  opts.out_dir = dir;
  opts.on_iteration = [](const rl::IterationMetrics& im) {
    if (im.iteration % 10 == 0) {
      std::cerr << "iter " << im.iteration << " reward " << im.mean_reward << " coverage "
                << im.mean_coverage << " entropy " << im.mean_entropy << " clip " << im.clip_fraction
                << "\n";
    }
  };
  auto result = rl::train(m, train_prompts, heldout, rl::cagsr_scorer(reward_cfg), cfg.train, opts);
  write_json(dir / "summary.json", train_summary(result));
  return result;
}

int cmd_train(Invocation& inv) {
  auto& cfg = inv.cfg;
  const auto data = load_data(cfg);
  auto m = initial_model(cfg, data);
  check_vocab(m, data);
  const auto result = run_training(inv, inv.out, cfg, data, m);
  std::cout << "iterations " << result.start_iteration << ".." << cfg.train.total_iterations
            << ", held-out greedy mean reward " << result.heldout_mean_reward << "\n";
  return kExitOk;
}

eval::EvalReport write_eval(const fs::path& dir, const model::PolicyModel& m, const RunConfig& cfg,
                            const DataBundle& data) {
  const auto& examples = data.split(cfg.eval_split);
  const auto report = eval::evaluate(m, examples, data.stats, resolve_reward(cfg, data.vocab));
  Json summary = eval::summary_json(report);
  summary["split"] = cfg.eval_split;
  write_json(dir / "report.json", summary);
  std::vector<Json> rows;
  rows.reserve(report.records.size());
  for (const auto& r : report.records) rows.push_back(eval::record_json(r, data.vocab));
  write_jsonl(dir / "examples.jsonl", rows);
  model::write_trace_dump(dir / "traces.bin", report.traces);
  return report;
}

int cmd_eval(Invocation& inv) {
  auto& cfg = inv.cfg;
  const auto data = load_data(cfg);
  require_path(cfg.paths.checkpoint, "paths.checkpoint");
  auto m = initial_model(cfg, data);
  check_vocab(m, data);
  write_run_files(inv, inv.out, cfg);
  const auto report = write_eval(inv.out, m, cfg, data);
  std::cout << eval::summary_json(report).dump(2) << "\n";
  return kExitOk;
}

int cmd_score(Invocation& inv) {
  auto& cfg = inv.cfg;
  const auto data = load_data(cfg);
  const auto records = model::read_trace_dump(require_path(cfg.paths.traces, "paths.traces"));
  write_run_files(inv, inv.out, cfg);
  const auto reward_cfg = resolve_reward(cfg, data.vocab);
  std::vector<Json> rows;
  for (const auto& rec : records) {
    model::Candidate cand;
    cand.token_ids = rec.response;
    cand.ended_with_eos = !rec.response.empty() && rec.response.back() == kEosId;
    cand.trace = rec.trace;
    const auto salient = reward::select_salient(rec.prompt, data.stats, reward_cfg);
    const auto b = reward::score_candidate(rec.prompt, cand, salient, reward_cfg);
    Json j;
    j["id"] = rec.id;
    j["coverage"] = b.coverage;
    j["focus"] = b.focus;
    j["repeat_penalty"] = b.repeat_penalty;
    j["total"] = b.total;
    rows.push_back(std::move(j));
  }
  write_jsonl(inv.out / "scores.jsonl", rows);
  std::cout << "scored " << rows.size() << " candidates\n";
  return kExitOk;
}

int cmd_ablate(Invocation& inv) {
  const auto data = load_data(inv.cfg);
  struct Variant {
    const char* name;
    double reward::RewardConfig::*weight;
  };
  const Variant variants[] = {{"full", nullptr},
                              {"no_coverage", &reward::RewardConfig::alpha},
                              {"no_focus", &reward::RewardConfig::beta},
                              {"no_repetition", &reward::RewardConfig::gamma}};
  RunConfig base = inv.cfg;
  write_run_files(inv, inv.out, base);
  // Every variant is evaluated with the full reward weights so totals compare.
  const auto full_reward = resolve_reward(base, data.vocab);
  Json table = Json::array();
  std::string md =
      "| variant | alpha | beta | gamma | coverage | entropy | repeat_penalty | relevance | rouge_l_f1 | "
      "exact_match | reward_full_weights |\n|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& v : variants) {
    RunConfig cfg = base;
    if (v.weight) cfg.reward.*v.weight = 0.0;
    auto m = initial_model(cfg, data);
    check_vocab(m, data);
    const fs::path dir = inv.out / v.name;
    std::cerr << "ablation variant " << v.name << "\n";
    run_training(inv, dir, cfg, data, m);
    const auto report = write_eval(dir, m, cfg, data);
    const auto full = eval::evaluate(m, data.split(cfg.eval_split), data.stats, full_reward);
    Json row;
    row["variant"] = v.name;
    row["alpha"] = cfg.reward.alpha;
    row["beta"] = cfg.reward.beta;
    row["gamma"] = cfg.reward.gamma;
    row["mean_coverage"] = report.mean_coverage;
    row["mean_entropy"] = report.mean_entropy;
    row["mean_repeat_penalty"] = report.mean_repeat_penalty;
    row["mean_relevance"] = report.mean_relevance;
    row["mean_rouge_l_f1"] = report.mean_rouge_l_f1;
    row["exact_match"] = report.exact_match;
    row["mean_reward_full_weights"] = full.mean_reward;
    table.push_back(row);
    char line[512];
    std::snprintf(line, sizeof line, "| %s | %g | %g | %g | %.4f | %.4f | %.4f | %.4f | %.4f | %.4f | %.4f |\n",
                  v.name, cfg.reward.alpha, cfg.reward.beta, cfg.reward.gamma, report.mean_coverage,
                  report.mean_entropy, report.mean_repeat_penalty, report.mean_relevance,
                  report.mean_rouge_l_f1, report.exact_match, full.mean_reward);
    md += line;
  }
  write_json(inv.out / "ablation.json", table);
  write_text(inv.out / "ablation.md", md);
  std::cout << md;
  return kExitOk;
}

Json load_config_tree(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot read " + path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("--config: " + path + " is not valid JSON");
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Coverage/focus attention-shaped reinforcement learning for seq2seq models", "cagsr"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(Invocation&);
  };
  const Command commands[] = {
      {"make-data", "Generate the toy corpus, splits and vocabulary", cmd_make_data},
      {"pretrain", "Supervised cross-entropy pretraining (the No-RL baseline)", cmd_pretrain},
      {"train-cagsr", "Attention-shaped RL fine-tuning (resumable)", cmd_train},
      {"score", "Score candidates from an attention-trace dump", cmd_score},
      {"eval", "Greedy evaluation of a checkpoint", cmd_eval},
      {"ablate", "Train with each reward term removed and compare", cmd_ablate},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON run config");
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
    subs.emplace_back(sub, &c);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Invocation inv;
  inv.argv = args;
  inv.out = out_dir;
  const Command* chosen = nullptr;
  for (const auto& [sub, cmd] : subs) {
    if (sub->parsed()) chosen = cmd;
  }
  inv.command = chosen->name;
  try {
    Json tree = load_config_tree(config_path);
    for (const auto& o : overrides) apply_override(tree, o);
    if (seed) tree["seed"] = *seed;
    inv.cfg = run_config_from_json(tree);
    return chosen->fn(inv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace cagsr::cli
