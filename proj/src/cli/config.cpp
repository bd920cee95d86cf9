#include "cagsr/cli/config.hpp"

#include <cmath>

namespace cagsr::cli {

RunConfig::RunConfig() {
  model.vocab_size = 0;
}

namespace {

Json without(Json j, const char* key) {
  j.erase(key);
  return j;
}

Json pretrain_json(const data::PretrainOptions& p) {
  Json j;
  j["epochs"] = p.epochs;
  j["lr"] = p.lr;
  j["batch_size"] = p.batch_size;
  return j;
}

}  // namespace

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["data"] = data::to_json(c.data);
  j["split"] = {{"ratios", c.split_ratios}, {"seed", c.split_seed}};
  Json m = model::to_json(c.model);
  j["model"] = m;
  Json r = reward::to_json(c.reward);
  r["stopwords"] = c.stopwords;
  j["reward"] = r;
  j["pretrain"] = pretrain_json(c.pretrain);
  j["train"] = without(rl::to_json(c.train), "seed");
  j["eval"] = {{"split", c.eval_split}};
  j["paths"] = {{"data", c.paths.data}, {"checkpoint", c.paths.checkpoint}, {"traces", c.paths.traces}};
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  StrictReader r(j, "");
  r.read("seed", c.seed);
  if (const Json* d = r.child("data")) c.data = data::corpus_config_from_json(*d, "data");
  if (const Json* s = r.child("split")) {
    StrictReader sr(*s, "split");
    sr.read("ratios", c.split_ratios);
    sr.read("seed", c.split_seed);
    sr.finish();
    const double sum = c.split_ratios[0] + c.split_ratios[1] + c.split_ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split.ratios must sum to 1");
    for (double v : c.split_ratios) {
      if (v < 0.0) throw ConfigError("split.ratios must be non-negative");
    }
  }
  if (const Json* m = r.child("model")) {
    if (!m->is_object()) throw ConfigError("model must be an object");
    Json mj = model::to_json(c.model);
    mj.update(*m);
    // vocab_size 0 is resolved later against the vocabulary.
    const bool auto_vocab = mj["vocab_size"] == 0;
    if (auto_vocab) mj["vocab_size"] = 128;
    c.model = model::model_config_from_json(mj, "model");
    if (auto_vocab) c.model.vocab_size = 0;
  }
  if (const Json* rw = r.child("reward")) {
    Json rj = *rw;
    if (rj.is_object() && rj.contains("stopwords")) {
      try {
        c.stopwords = rj["stopwords"].get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("reward.stopwords has the wrong type");
      }
      rj.erase("stopwords");
    }
    c.reward = reward::reward_config_from_json(rj, "reward");
  }
  if (const Json* p = r.child("pretrain")) {
    StrictReader pr(*p, "pretrain");
    pr.read("epochs", c.pretrain.epochs);
    pr.read("lr", c.pretrain.lr);
    pr.read("batch_size", c.pretrain.batch_size);
    pr.finish();
    if (c.pretrain.epochs < 0) throw ConfigError("pretrain.epochs must be >= 0");
    if (!(c.pretrain.lr > 0.0)) throw ConfigError("pretrain.lr must be > 0");
    if (c.pretrain.batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
  }
  if (const Json* t = r.child("train")) {
    if (t->is_object() && t->contains("seed")) throw ConfigError("unknown config key 'train.seed'");
    c.train = rl::train_config_from_json(*t, "train");
  }
  if (const Json* e = r.child("eval")) {
    StrictReader er(*e, "eval");
    er.read("split", c.eval_split);
    er.finish();
    if (c.eval_split != "train" && c.eval_split != "valid" && c.eval_split != "test") {
      throw ConfigError("eval.split must be train, valid or test");
    }
  }
  if (const Json* p = r.child("paths")) {
    StrictReader pr(*p, "paths");
    pr.read("data", c.paths.data);
    pr.read("checkpoint", c.paths.checkpoint);
    pr.read("traces", c.paths.traces);
    pr.finish();
  }
  r.finish();
  c.train.seed = c.seed;
  c.pretrain.seed = c.seed;
  return c;
}

void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    if (!node->is_object()) throw ConfigError("--set: '" + key + "' does not name an object field");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

reward::RewardConfig resolve_reward(const RunConfig& c, const data::Vocabulary& vocab) {
  reward::RewardConfig r = c.reward;
  r.stopword_ids.clear();
  for (const auto& w : c.stopwords) {
    if (vocab.contains(w)) r.stopword_ids.insert(vocab.id(w));
  }
  return r;
}

}  // namespace cagsr::cli
