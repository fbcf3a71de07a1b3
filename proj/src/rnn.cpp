#include "cascade/rnn.hpp"

#include <cmath>
#include <string>

namespace cascade {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_step_shapes(const LstmLayerParams& params, const Vector& x,
                       const LstmState& prev) {
  if (x.size() != params.input_size()) {
    throw DimensionError("lstm_step: input size " + std::to_string(x.size()) +
                         " != layer input size " +
                         std::to_string(params.input_size()));
  }
  if (prev.h.size() != params.hidden_size || prev.c.size() != params.hidden_size) {
    throw DimensionError("lstm_step: state size mismatch for H=" +
                         std::to_string(params.hidden_size));
  }
}

}  // namespace

LstmLayerParams::LstmLayerParams(int input_size, int hidden_size)
    : w_input(4 * hidden_size, input_size),
      w_hidden(4 * hidden_size, hidden_size),
      bias(4 * hidden_size),
      hidden_size(hidden_size) {
  if (hidden_size <= 0 || input_size <= 0) {
    throw ConfigError("LstmLayerParams: sizes must be positive");
  }
}

void LstmLayerParams::init_params(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  for (double& w : w_input.span()) w = rng.uniform(-bound, bound);
  for (double& w : w_hidden.span()) w = rng.uniform(-bound, bound);
  bias.fill(0.0);
  for (int j = hidden_size; j < 2 * hidden_size; ++j) bias[j] = 1.0;
}

void LstmLayerParams::zero() {
  w_input.fill(0.0);
  w_hidden.fill(0.0);
  bias.fill(0.0);
}

std::size_t LstmLayerParams::param_count() const {
  return w_input.size() + w_hidden.size() + static_cast<std::size_t>(bias.size());
}

LstmStack::LstmStack(int input_size, int hidden_size, int num_layers) {
  if (num_layers <= 0) throw ConfigError("LstmStack: need at least one layer");
  layers.reserve(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    layers.emplace_back(l == 0 ? input_size : hidden_size, hidden_size);
  }
}

std::vector<LstmState> LstmStack::zero_states() const {
  std::vector<LstmState> states;
  states.reserve(layers.size());
  for (const auto& layer : layers) states.emplace_back(layer.hidden_size);
  return states;
}

void LstmStack::init_params(Rng& rng) {
  for (auto& layer : layers) layer.init_params(rng);
}

void LstmStack::zero() {
  for (auto& layer : layers) layer.zero();
}

std::size_t LstmStack::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.param_count();
  return n;
}

namespace {

// Shared core of lstm_step and lstm_forward; fills the tape when given one.
LstmState step_impl(const LstmLayerParams& params, const Vector& x,
                    const LstmState& prev, LstmStepTape* tape) {
  const int h_size = params.hidden_size;
  Vector gates = params.bias;
  matvec_acc(params.w_input, x, gates);
  matvec_acc(params.w_hidden, prev.h, gates);

  LstmState next(h_size);
  Vector gate_i(h_size), gate_f(h_size), gate_g(h_size), gate_o(h_size);
  Vector tanh_c(h_size);
  for (int j = 0; j < h_size; ++j) {
    const double i = sigmoid(gates[j]);
    const double f = sigmoid(gates[h_size + j]);
    const double g = std::tanh(gates[2 * h_size + j]);
    const double o = sigmoid(gates[3 * h_size + j]);
    const double c = f * prev.c[j] + i * g;
    const double tc = std::tanh(c);
    gate_i[j] = i;
    gate_f[j] = f;
    gate_g[j] = g;
    gate_o[j] = o;
    next.c[j] = c;
    next.h[j] = o * tc;
    tanh_c[j] = tc;
  }
  if (tape != nullptr) {
    tape->x = x;
    tape->h_prev = prev.h;
    tape->c_prev = prev.c;
    tape->gate_i = std::move(gate_i);
    tape->gate_f = std::move(gate_f);
    tape->gate_g = std::move(gate_g);
    tape->gate_o = std::move(gate_o);
    tape->c = next.c;
    tape->tanh_c = std::move(tanh_c);
  }
  return next;
}

}  // namespace

LstmState lstm_step(const LstmLayerParams& params, const Vector& x,
                    const LstmState& prev) {
  check_step_shapes(params, x, prev);
  return step_impl(params, x, prev, nullptr);
}

LstmForwardResult lstm_forward(const LstmStack& stack,
                               std::span<const Vector> inputs,
                               const std::vector<LstmState>& init,
                               bool want_tape) {
  if (inputs.empty()) throw ArgumentError("lstm_forward: empty input sequence");
  const int num_layers = stack.num_layers();
  if (static_cast<int>(init.size()) != num_layers) {
    throw DimensionError("lstm_forward: init states (" +
                         std::to_string(init.size()) + ") != layers (" +
                         std::to_string(num_layers) + ")");
  }
  for (int l = 0; l < num_layers; ++l) {
    if (init[l].h.size() != stack.layers[l].hidden_size) {
      throw DimensionError("lstm_forward: init state size mismatch at layer " +
                           std::to_string(l));
    }
  }
  const int steps = static_cast<int>(inputs.size());

  LstmForwardResult result;
  result.tape.time_steps = steps;
  if (want_tape) {
    result.tape.steps.resize(num_layers);
    for (auto& layer_steps : result.tape.steps) layer_steps.resize(steps);
  }
  result.top_hidden.reserve(steps);

  std::vector<LstmState> states = init;
  for (int t = 0; t < steps; ++t) {
    const Vector* x = &inputs[t];
    check_step_shapes(stack.layers[0], *x, states[0]);
    for (int l = 0; l < num_layers; ++l) {
      LstmStepTape* tape =
          want_tape ? &result.tape.steps[l][static_cast<std::size_t>(t)] : nullptr;
      states[l] = step_impl(stack.layers[l], *x, states[l], tape);
      x = &states[l].h;
    }
    result.top_hidden.push_back(states.back().h);
  }
  result.final_states = std::move(states);
  return result;
}

namespace {

struct LayerBackwardResult {
  LstmLayerParams param_grads;
  std::vector<Vector> input_grads;
  LstmState init_grad;
};

// One layer's full time-backward given dL/dh[t] for each step and dL/d(h,c)
// of the final state.
LayerBackwardResult layer_backward(const LstmLayerParams& params,
                                   const std::vector<LstmStepTape>& steps,
                                   const std::vector<Vector>& grad_out,
                                   const LstmState& grad_final) {
  const int h_size = params.hidden_size;
  const int steps_n = static_cast<int>(steps.size());
  LayerBackwardResult result{
      LstmLayerParams(params.input_size(), h_size),
      {},
      LstmState(h_size)};
  result.param_grads.zero();
  result.input_grads.reserve(steps_n);

  Vector dh_next = grad_final.h;
  Vector dc_next = grad_final.c;
  Vector dz(4 * h_size);
  std::vector<Vector> input_grads_rev;
  input_grads_rev.reserve(steps_n);

  for (int t = steps_n - 1; t >= 0; --t) {
    const LstmStepTape& tape = steps[static_cast<std::size_t>(t)];
    for (int j = 0; j < h_size; ++j) {
      const double dh = grad_out[static_cast<std::size_t>(t)][j] + dh_next[j];
      const double i = tape.gate_i[j];
      const double f = tape.gate_f[j];
      const double g = tape.gate_g[j];
      const double o = tape.gate_o[j];
      const double tc = tape.tanh_c[j];
      const double dc = dc_next[j] + dh * o * (1.0 - tc * tc);
      const double d_o = dh * tc;
      dz[j] = dc * g * i * (1.0 - i);
      dz[h_size + j] = dc * tape.c_prev[j] * f * (1.0 - f);
      dz[2 * h_size + j] = dc * i * (1.0 - g * g);
      dz[3 * h_size + j] = d_o * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    add_outer(dz, tape.x, result.param_grads.w_input);
    add_outer(dz, tape.h_prev, result.param_grads.w_hidden);
    for (int j = 0; j < 4 * h_size; ++j) result.param_grads.bias[j] += dz[j];

    Vector dx(params.input_size());
    matvec_t_acc(params.w_input, dz, dx);
    input_grads_rev.push_back(std::move(dx));

    dh_next.fill(0.0);
    matvec_t_acc(params.w_hidden, dz, dh_next);
  }

  for (int t = steps_n - 1; t >= 0; --t) {
    result.input_grads.push_back(std::move(input_grads_rev[static_cast<std::size_t>(t)]));
  }
  result.init_grad.h = std::move(dh_next);
  result.init_grad.c = std::move(dc_next);
  return result;
}

}  // namespace

LstmBackwardResult lstm_backward(const LstmStack& stack, const LstmTape& tape,
                                 std::span<const Vector> grad_top_hidden,
                                 const std::vector<LstmState>& grad_final) {
  const int num_layers = stack.num_layers();
  if (static_cast<int>(tape.steps.size()) != num_layers) {
    throw ContractError("lstm_backward: tape does not match stack layers");
  }
  const int steps = tape.time_steps;
  if (static_cast<int>(grad_top_hidden.size()) != steps) {
    throw ContractError("lstm_backward: grad_top_hidden length " +
                        std::to_string(grad_top_hidden.size()) +
                        " != tape steps " + std::to_string(steps));
  }
  if (static_cast<int>(grad_final.size()) != num_layers) {
    throw ContractError("lstm_backward: grad_final size mismatch");
  }
  for (int t = 0; t < steps; ++t) {
    if (grad_top_hidden[t].size() != stack.hidden_size()) {
      throw ContractError("lstm_backward: grad_top_hidden width mismatch");
    }
  }

  LstmBackwardResult result;
  result.param_grads.reserve(num_layers);
  for (const auto& layer : stack.layers) {
    result.param_grads.emplace_back(layer.input_size(), layer.hidden_size);
    result.param_grads.back().zero();
  }
  result.init_state_grads.assign(num_layers, LstmState(stack.layers[0].hidden_size));
  for (int l = 0; l < num_layers; ++l) {
    result.init_state_grads[static_cast<std::size_t>(l)] =
        LstmState(stack.layers[static_cast<std::size_t>(l)].hidden_size);
  }

  // Top layer first; each layer's input grads become the next one's
  // per-step output grads.
  std::vector<Vector> grad_out(grad_top_hidden.begin(), grad_top_hidden.end());
  for (int l = num_layers - 1; l >= 0; --l) {
    LayerBackwardResult layer_result = layer_backward(
        stack.layers[static_cast<std::size_t>(l)],
        tape.steps[static_cast<std::size_t>(l)], grad_out,
        grad_final[static_cast<std::size_t>(l)]);
    result.param_grads[static_cast<std::size_t>(l)] =
        std::move(layer_result.param_grads);
    result.init_state_grads[static_cast<std::size_t>(l)] =
        std::move(layer_result.init_grad);
    grad_out = std::move(layer_result.input_grads);
  }
  result.input_grads = std::move(grad_out);
  return result;
}

}  // namespace cascade
