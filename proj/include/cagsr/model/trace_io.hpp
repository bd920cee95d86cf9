#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cagsr/model/trace.hpp"

namespace cagsr::model {

// One dumped candidate: its token streams and captured cross-attention.
struct TraceRecord {
  std::string id;
  std::vector<int> prompt;
  std::vector<int> response;  // full sampled sequence, EOS included if drawn
  AttentionTrace trace;
};

// Trace dumps use the archive container (see autodiff/archive.hpp) with
// metadata {"kind": "attention_trace_dump", "candidates": [{"id",
// "prompt_len", "response_len", "num_layers", "layer_indices"}, ...]} and, per
// candidate id, three arrays:
//   <id>/attention  f32  [response_len * num_layers, prompt_len]
//   <id>/prompt     i32  [prompt_len]
//   <id>/response   i32  [response_len]
void write_trace_dump(const std::filesystem::path& path, std::span<const TraceRecord> records);
std::vector<TraceRecord> read_trace_dump(const std::filesystem::path& path);

}  // namespace cagsr::model
