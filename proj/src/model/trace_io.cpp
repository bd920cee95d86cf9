#include "cagsr/model/trace_io.hpp"

#include "cagsr/autodiff/archive.hpp"
#include "cagsr/common/error.hpp"
#include "cagsr/common/json_util.hpp"

namespace cagsr::model {

void AttentionTrace::validate() const {
  if (prompt_len < 1 || num_layers < 1 || response_len < 0) {
    throw ContractError("attention trace: invalid header (prompt_len " +
                        std::to_string(prompt_len) + ", num_layers " +
                        std::to_string(num_layers) + ")");
  }
  const auto expected = static_cast<std::size_t>(response_len) * num_layers * prompt_len;
  if (rows.size() != expected) {
    throw ContractError("attention trace: " + std::to_string(rows.size()) +
                        " values, expected " + std::to_string(expected) + " (" +
                        std::to_string(response_len) + " steps x " +
                        std::to_string(num_layers) + " layers x " +
                        std::to_string(prompt_len) + " positions)");
  }
  if (!layer_indices.empty() && layer_indices.size() != static_cast<std::size_t>(num_layers)) {
    throw ContractError("attention trace: layer_indices does not match num_layers");
  }
}

AttentionTrace AttentionTrace::prefix(int steps) const {
  if (steps < 0 || steps > response_len) {
    throw ContractError("attention trace: prefix of " + std::to_string(steps) + " steps from " +
                        std::to_string(response_len));
  }
  AttentionTrace out = *this;
  out.response_len = steps;
  out.rows.resize(static_cast<std::size_t>(steps) * num_layers * prompt_len);
  return out;
}

void write_trace_dump(const std::filesystem::path& path, std::span<const TraceRecord> records) {
  ad::Archive ar;
  ar.metadata["kind"] = "attention_trace_dump";
  ar.metadata["candidates"] = Json::array();
  for (const auto& r : records) {
    r.trace.validate();
    if (r.prompt.size() != static_cast<std::size_t>(r.trace.prompt_len) ||
        r.response.size() != static_cast<std::size_t>(r.trace.response_len)) {
      throw ContractError("trace dump: token streams of '" + r.id + "' disagree with its trace");
    }
    ar.metadata["candidates"].push_back({{"id", r.id},
                                         {"prompt_len", r.trace.prompt_len},
                                         {"response_len", r.trace.response_len},
                                         {"num_layers", r.trace.num_layers},
                                         {"layer_indices", r.trace.layer_indices}});
    const auto steps = static_cast<std::size_t>(r.trace.row_count());
    ar.add(r.id + "/attention", {steps, static_cast<std::size_t>(r.trace.prompt_len)},
           std::span<const float>(r.trace.rows));
    std::vector<std::int32_t> p(r.prompt.begin(), r.prompt.end());
    std::vector<std::int32_t> y(r.response.begin(), r.response.end());
    ar.add(r.id + "/prompt", {p.size()}, std::span<const std::int32_t>(p));
    ar.add(r.id + "/response", {y.size()}, std::span<const std::int32_t>(y));
  }
  ar.save(path);
}

std::vector<TraceRecord> read_trace_dump(const std::filesystem::path& path) {
  const ad::Archive ar = ad::Archive::load(path);
  if (ar.metadata.value("kind", "") != "attention_trace_dump") {
    throw InputError(path.string() + " is not an attention trace dump");
  }
  std::vector<TraceRecord> out;
  for (const auto& c : ar.metadata.at("candidates")) {
    TraceRecord r;
    r.id = c.at("id").get<std::string>();
    r.trace.prompt_len = c.at("prompt_len").get<int>();
    r.trace.response_len = c.at("response_len").get<int>();
    r.trace.num_layers = c.at("num_layers").get<int>();
    r.trace.layer_indices = c.at("layer_indices").get<std::vector<int>>();
    r.trace.rows = ar.get_f32(r.id + "/attention");
    const auto p = ar.get_i32(r.id + "/prompt");
    const auto y = ar.get_i32(r.id + "/response");
    r.prompt.assign(p.begin(), p.end());
    r.response.assign(y.begin(), y.end());
    try {
      r.trace.validate();
    } catch (const ContractError& e) {
      throw InputError("trace dump '" + r.id + "': " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cagsr::model
