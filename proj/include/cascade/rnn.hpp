#pragma once

#include <span>
#include <vector>

#include "cascade/rng.hpp"
#include "cascade/tensor.hpp"

namespace cascade {

/// One LSTM layer. The 4H gate dimension is blocked in the fixed order
/// input gate i, forget gate f, cell candidate g, output gate o; weight
/// files depend on this order.
struct LstmLayerParams {
  Matrix w_input;   // 4H x D_in
  Matrix w_hidden;  // 4H x H
  Vector bias;      // 4H
  int hidden_size;

  LstmLayerParams(int input_size, int hidden_size);

  int input_size() const { return w_input.cols(); }

  /// Uniform [-1/sqrt(H), 1/sqrt(H)] weights; forget-gate bias 1, others 0.
  void init_params(Rng& rng);
  void zero();
  std::size_t param_count() const;
};

struct LstmState {
  Vector h;
  Vector c;

  explicit LstmState(int hidden_size) : h(hidden_size), c(hidden_size) {}
};

/// Layers stacked bottom-up; layer L's input is layer L-1's hidden output.
struct LstmStack {
  std::vector<LstmLayerParams> layers;

  LstmStack(int input_size, int hidden_size, int num_layers);

  int hidden_size() const { return layers.back().hidden_size; }
  int input_size() const { return layers.front().input_size(); }
  int num_layers() const { return static_cast<int>(layers.size()); }
  std::vector<LstmState> zero_states() const;
  void init_params(Rng& rng);
  void zero();
  std::size_t param_count() const;
};

LstmState lstm_step(const LstmLayerParams& params, const Vector& x,
                    const LstmState& prev);

/// Everything the backward pass needs for one cell evaluation.
struct LstmStepTape {
  Vector x;
  Vector h_prev;
  Vector c_prev;
  Vector gate_i;
  Vector gate_f;
  Vector gate_g;
  Vector gate_o;
  Vector c;
  Vector tanh_c;
};

struct LstmTape {
  // steps[layer][t]
  std::vector<std::vector<LstmStepTape>> steps;
  int time_steps = 0;
};

struct LstmForwardResult {
  std::vector<Vector> top_hidden;        // h of the top layer, one per step
  std::vector<LstmState> final_states;   // (h, c) per layer at the last step
  LstmTape tape;
};

/// Time-major forward over the whole sequence. Set want_tape = false for
/// inference to skip tape storage.
LstmForwardResult lstm_forward(const LstmStack& stack,
                               std::span<const Vector> inputs,
                               const std::vector<LstmState>& init,
                               bool want_tape = true);

struct LstmBackwardResult {
  std::vector<LstmLayerParams> param_grads;  // same shapes as the stack
  std::vector<Vector> input_grads;           // one per step, layer-0 input size
  std::vector<LstmState> init_state_grads;   // one per layer
};

/// Exact BPTT. grad_top_hidden holds dL/dh_top per step; grad_final holds
/// dL/d(h, c) of each layer's final state (zero vectors when the loss does
/// not read them directly).
LstmBackwardResult lstm_backward(const LstmStack& stack, const LstmTape& tape,
                                 std::span<const Vector> grad_top_hidden,
                                 const std::vector<LstmState>& grad_final);

}  // namespace cascade
