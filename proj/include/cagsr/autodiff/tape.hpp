#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cagsr/autodiff/tensor.hpp"

namespace cagsr::ad {

// Define-by-run gradient tape. Every op computes its output eagerly; when the
// tape records and any input requires grad, the op also appends a node with
// its backward rule. Nodes are appended in execution order, so reverse order
// is a valid topological order for backward().
//
// A tape supports exactly one backward() call; a second call throws
// ContractError. Build a new tape for each forward pass.
template <typename T>
class BasicTape {
 public:
  using Tensor = BasicTensor<T>;

  enum class Mode { kRecord, kInference };

  explicit BasicTape(Mode mode = Mode::kRecord) : mode_(mode) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Linear algebra / layout.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
  Tensor concat_cols(std::span<const Tensor> parts);
  // Concatenate along axis 0 (1-D vectors or matrices with equal widths).
  Tensor concat(std::span<const Tensor> parts);

  // Elementwise.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  // a[m x n] + bias[n], broadcast over rows.
  Tensor add_bias(const Tensor& a, const Tensor& bias);
  Tensor scale(const Tensor& a, T factor);
  Tensor exp(const Tensor& a);
  Tensor gelu(const Tensor& a);
  Tensor clamp(const Tensor& a, T lo, T hi);
  Tensor minimum(const Tensor& a, const Tensor& b);

  // Normalization / probabilities.
  Tensor softmax(const Tensor& a, std::size_t axis);
  Tensor log_softmax(const Tensor& a, std::size_t axis);
  // Row-wise layer norm over the last axis with affine gamma/beta.
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    T eps = T(1e-5));
  // Sets a[i][j] = -inf for j > i + offset (causal attention mask).
  Tensor mask_future(const Tensor& a, std::size_t offset = 0);

  // Lookup / losses.
  Tensor embedding(const Tensor& table, std::span<const int> ids);
  // log softmax(logits[i])[targets[i]] for each row; shape [n].
  Tensor token_log_probs(const Tensor& logits, std::span<const int> targets);
  // Mean negative log-likelihood over rows; scalar.
  Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

  // Reductions.
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  // [m x n] -> [1 x n]
  Tensor mean_rows(const Tensor& a);

  // Same values, cut from the graph.
  Tensor detach(const Tensor& a);

  // Populates grad on every requires-grad tensor that feeds `loss` on this
  // tape. Gradients accumulate into existing buffers; nothing is zeroed.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  Tensor record(Tensor out, std::vector<Tensor> inputs,
                std::function<void()> backward_fn);

  Mode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

}  // namespace cagsr::ad
