#include "cagsr/eval/evaluate.hpp"

#include <algorithm>

namespace cagsr::eval {

EvalReport evaluate(const model::PolicyModel& model, std::span<const data::TokenizedExample> examples,
                    const data::CorpusStats& stats, const reward::RewardConfig& reward_cfg) {
  EvalReport report;
  const auto greedy = model::SamplingConfig::greedy();
  for (const auto& ex : examples) {
    const auto salient = reward::select_salient(ex.prompt, stats, reward_cfg);
    auto cand = std::move(model.generate(ex.prompt, greedy, 1).front());
    EvalRecord rec;
    rec.id = ex.id;
    rec.prompt = ex.prompt;
    rec.reference = ex.answer;
    const auto content = cand.content();
    rec.response.assign(content.begin(), content.end());
    rec.rouge = rouge_l(rec.response, rec.reference);
    rec.relevance = relevance_proxy(ex.prompt, rec.response, salient);
    rec.reward = reward::score_candidate(ex.prompt, cand, salient, reward_cfg);
    rec.exact_match = rec.response == rec.reference;

    report.mean_relevance += rec.relevance;
    report.mean_rouge_l_f1 += rec.rouge.f1;
    report.mean_coverage += rec.reward.coverage;
    report.mean_entropy += rec.reward.mean_entropy();
    report.mean_repeat_penalty += rec.reward.repeat_penalty;
    report.mean_reward += rec.reward.total;
    report.exact_match += rec.exact_match ? 1.0 : 0.0;

    report.traces.push_back({std::to_string(ex.id), ex.prompt, cand.token_ids, std::move(cand.trace)});
    report.records.push_back(std::move(rec));
  }
  report.count = report.records.size();
  if (report.count) {
    const double n = static_cast<double>(report.count);
    for (double* m : {&report.mean_relevance, &report.mean_rouge_l_f1, &report.mean_coverage,
                      &report.mean_entropy, &report.mean_repeat_penalty, &report.mean_reward,
                      &report.exact_match})
      *m /= n;
    report.perplexity = perplexity(model, examples);
  }
  return report;
}

Json summary_json(const EvalReport& r) {
  return Json{{"count", r.count},
              {"mean_relevance", r.mean_relevance},
              {"mean_rouge_l_f1", r.mean_rouge_l_f1},
              {"perplexity", r.perplexity},
              {"mean_coverage", r.mean_coverage},
              {"mean_entropy", r.mean_entropy},
              {"mean_repeat_penalty", r.mean_repeat_penalty},
              {"mean_reward", r.mean_reward},
              {"exact_match", r.exact_match}};
}

Json record_json(const EvalRecord& rec, const data::Vocabulary& vocab) {
  return Json{{"id", rec.id},
              {"prompt", data::detokenize(rec.prompt, vocab)},
              {"reference", data::detokenize(rec.reference, vocab)},
              {"response", data::detokenize(rec.response, vocab)},
              {"rouge_l_precision", rec.rouge.precision},
              {"rouge_l_recall", rec.rouge.recall},
              {"rouge_l_f1", rec.rouge.f1},
              {"relevance", rec.relevance},
              {"coverage", rec.reward.coverage},
              {"focus", rec.reward.focus},
              {"mean_entropy", rec.reward.mean_entropy()},
              {"repeat_penalty", rec.reward.repeat_penalty},
              {"reward", rec.reward.total},
              {"exact_match", rec.exact_match}};
}

}  // namespace cagsr::eval
