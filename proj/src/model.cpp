#include "cascade/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cascade/serialize.hpp"

namespace cascade {

const char* to_string(ArchitectureKind kind) {
  switch (kind) {
    case ArchitectureKind::FaceRnn: return "face-rnn";
    case ArchitectureKind::ContextRnn: return "context-rnn";
    case ArchitectureKind::ParallelRnn: return "parallel-rnn";
    case ArchitectureKind::ConcatenatedRnn: return "concatenated-rnn";
    case ArchitectureKind::CacaA: return "caca-a";
    case ArchitectureKind::CacaB: return "caca-b";
  }
  throw ArgumentError("to_string: unknown architecture kind");
}

ArchitectureKind parse_architecture(const std::string& name) {
  for (ArchitectureKind kind : kAllArchitectures) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unknown architecture '" + name +
                    "' (expected one of face-rnn, context-rnn, parallel-rnn, "
                    "concatenated-rnn, caca-a, caca-b)");
}

bool is_fusion_architecture(ArchitectureKind kind) {
  return kind != ArchitectureKind::FaceRnn && kind != ArchitectureKind::ContextRnn;
}

bool is_cascade_architecture(ArchitectureKind kind) {
  return kind == ArchitectureKind::CacaA || kind == ArchitectureKind::CacaB;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) {
      throw ConfigError(std::string("ModelConfig: ") + name + " must be positive");
    }
  };
  const bool uses_face = kind != ArchitectureKind::ContextRnn;
  const bool uses_context = kind != ArchitectureKind::FaceRnn;
  if (uses_face) positive(face_feature_dim, "face_feature_dim");
  if (uses_context) positive(context_feature_dim, "context_feature_dim");
  positive(encoded_dim, "encoded_dim");
  positive(hidden_size, "hidden_size");
  positive(left_layers, "left_layers");
  positive(right_layers, "right_layers");
  positive(num_classes, "num_classes");
  if (right_hidden_size < 0) {
    throw ConfigError("ModelConfig: right_hidden_size must be >= 0");
  }
  if (is_cascade_architecture(kind) && effective_right_hidden() != hidden_size) {
    throw ConfigError(
        "ModelConfig: cascade architectures need equal left/right hidden "
        "sizes (" + std::to_string(hidden_size) + " vs " +
        std::to_string(effective_right_hidden()) +
        "); the dot attention score requires encoder and decoder hidden "
        "sizes to match");
  }
}

void LinearLayer::init_params(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
  for (double& v : w.span()) v = rng.uniform(-bound, bound);
  b.fill(0.0);
}

Vector LinearLayer::apply(const Vector& x) const {
  Vector out = b;
  matvec_acc(w, x, out);
  return out;
}

namespace {

/// Allocates every component the kind needs, all parameters zero.
Model make_structure(const ModelConfig& config) {
  config.validate();
  Model model;
  model.config = config;
  const int encoded = config.encoded_dim;
  const int hidden = config.hidden_size;
  const int right_hidden = config.effective_right_hidden();

  switch (config.kind) {
    case ArchitectureKind::FaceRnn:
      model.face_encoder.emplace(encoded, config.face_feature_dim);
      model.left_stack.emplace(encoded, hidden, config.left_layers);
      break;
    case ArchitectureKind::ContextRnn:
      model.context_encoder.emplace(encoded, config.context_feature_dim);
      model.left_stack.emplace(encoded, hidden, config.left_layers);
      break;
    case ArchitectureKind::ParallelRnn:
      model.face_encoder.emplace(encoded, config.face_feature_dim);
      model.context_encoder.emplace(encoded, config.context_feature_dim);
      // left reads face, right reads context; both run the full clip.
      model.left_stack.emplace(encoded, hidden, config.left_layers);
      model.right_stack.emplace(encoded, right_hidden, config.left_layers);
      model.fusion.emplace(hidden, hidden + right_hidden);
      break;
    case ArchitectureKind::ConcatenatedRnn:
      model.face_encoder.emplace(encoded, config.face_feature_dim);
      model.context_encoder.emplace(encoded, config.context_feature_dim);
      model.left_stack.emplace(2 * encoded, hidden, config.left_layers);
      break;
    case ArchitectureKind::CacaA:
    case ArchitectureKind::CacaB:
      model.face_encoder.emplace(encoded, config.face_feature_dim);
      model.context_encoder.emplace(encoded, config.context_feature_dim);
      model.left_stack.emplace(encoded, hidden, config.left_layers);
      model.right_stack.emplace(encoded, right_hidden, config.right_layers);
      model.attention_combine.emplace(hidden, 2 * hidden);
      break;
  }
  model.classifier.emplace(config.num_classes, hidden);
  return model;
}

void enumerate_views(Model& model, std::vector<ParamView>& views) {
  auto add = [&views](const std::string& name, std::span<double> data) {
    views.push_back(ParamView{name, data});
  };
  auto add_linear = [&](const std::string& name, std::optional<LinearLayer>& l) {
    if (!l) return;
    add(name + ".w", l->w.span());
    add(name + ".b", l->b.span());
  };
  auto add_stack = [&](const std::string& name, std::optional<LstmStack>& s) {
    if (!s) return;
    for (std::size_t l = 0; l < s->layers.size(); ++l) {
      const std::string prefix = name + ".layer" + std::to_string(l);
      add(prefix + ".w_input", s->layers[l].w_input.span());
      add(prefix + ".w_hidden", s->layers[l].w_hidden.span());
      add(prefix + ".bias", s->layers[l].bias.span());
    }
  };
  add_linear("face_encoder", model.face_encoder);
  add_linear("context_encoder", model.context_encoder);
  add_stack("left_stack", model.left_stack);
  add_stack("right_stack", model.right_stack);
  if (model.attention_combine) add("attention_combine", model.attention_combine->span());
  add_linear("fusion", model.fusion);
  add_linear("classifier", model.classifier);
}

}  // namespace

std::vector<ParamView> Model::param_views() {
  std::vector<ParamView> views;
  enumerate_views(*this, views);
  return views;
}

std::size_t Model::param_count() const {
  std::vector<ParamView> views;
  enumerate_views(const_cast<Model&>(*this), views);
  std::size_t n = 0;
  for (const ParamView& v : views) n += v.data.size();
  return n;
}

void Model::zero_params() {
  for (ParamView& v : param_views()) {
    std::fill(v.data.begin(), v.data.end(), 0.0);
  }
}

std::vector<double> Model::flatten_params() const {
  std::vector<ParamView> views;
  enumerate_views(const_cast<Model&>(*this), views);
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const ParamView& v : views) flat.insert(flat.end(), v.data.begin(), v.data.end());
  return flat;
}

void Model::set_params(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw ContractError("set_params: flat size " + std::to_string(flat.size()) +
                        " != param count " + std::to_string(param_count()));
  }
  std::size_t offset = 0;
  for (ParamView& v : param_views()) {
    std::copy(flat.begin() + offset, flat.begin() + offset + v.data.size(),
              v.data.begin());
    offset += v.data.size();
  }
}

Model zeros_like(const Model& model) { return make_structure(model.config); }

Model build_model(const ModelConfig& config) {
  Model model = make_structure(config);
  Rng rng(config.seed);
  // Initialization order = enumeration order, so equal seeds give
  // bit-identical parameters.
  if (model.face_encoder) model.face_encoder->init_params(rng);
  if (model.context_encoder) model.context_encoder->init_params(rng);
  if (model.left_stack) model.left_stack->init_params(rng);
  if (model.right_stack) model.right_stack->init_params(rng);
  if (model.attention_combine) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(model.attention_combine->cols()));
    for (double& v : model.attention_combine->span()) v = rng.uniform(-bound, bound);
  }
  if (model.fusion) model.fusion->init_params(rng);
  model.classifier->init_params(rng);
  return model;
}

std::size_t count_params(const Model& model) { return model.param_count(); }

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace {

ClipPrediction classify(const Model& model, const Vector& head_input) {
  ClipPrediction pred{model.classifier->apply(head_input), Vector(1), 0};
  pred.probabilities = softmax(pred.logits);
  int best = 0;
  for (int k = 1; k < pred.logits.size(); ++k) {
    if (pred.logits[k] > pred.logits[best]) best = k;  // ties keep the lowest index
  }
  pred.predicted_class = best;
  return pred;
}

std::vector<Vector> encode_stream(const LinearLayer& encoder, const Matrix& stream) {
  std::vector<Vector> encoded;
  encoded.reserve(static_cast<std::size_t>(stream.rows()));
  for (int t = 0; t < stream.rows(); ++t) {
    encoded.push_back(encoder.apply(stream.row_vector(t)));
  }
  return encoded;
}

std::vector<Vector> rows_of(const Matrix& stream) {
  std::vector<Vector> rows;
  rows.reserve(static_cast<std::size_t>(stream.rows()));
  for (int t = 0; t < stream.rows(); ++t) rows.push_back(stream.row_vector(t));
  return rows;
}

void check_stream_dim(const Matrix& stream, int expected, const char* name) {
  if (stream.cols() != expected) {
    throw DataError(std::string(name) + " stream feature dim " +
                    std::to_string(stream.cols()) + " != configured " +
                    std::to_string(expected));
  }
}

}  // namespace

ClipPrediction forward_clip(const Model& model, const Matrix& face_stream,
                            const Matrix& context_stream, ClipTape* tape) {
  const ModelConfig& config = model.config;
  if (face_stream.rows() != context_stream.rows()) {
    throw DataError("forward_clip: face stream has " +
                    std::to_string(face_stream.rows()) +
                    " frames but context stream has " +
                    std::to_string(context_stream.rows()));
  }
  const bool want_tape = tape != nullptr;
  const auto forward_stack = [&](const LstmStack& stack,
                                 std::span<const Vector> inputs,
                                 const std::vector<LstmState>& init) {
    return lstm_forward(stack, inputs, init, want_tape);
  };

  Vector head_input(1);
  switch (config.kind) {
    case ArchitectureKind::FaceRnn:
    case ArchitectureKind::ContextRnn: {
      const bool face = config.kind == ArchitectureKind::FaceRnn;
      const Matrix& stream = face ? face_stream : context_stream;
      check_stream_dim(stream, face ? config.face_feature_dim : config.context_feature_dim,
                       face ? "face" : "context");
      const LinearLayer& encoder = face ? *model.face_encoder : *model.context_encoder;
      std::vector<Vector> encoded = encode_stream(encoder, stream);
      LstmForwardResult fwd =
          forward_stack(*model.left_stack, encoded, model.left_stack->zero_states());
      head_input = fwd.top_hidden.back();
      if (want_tape) {
        (face ? tape->face_raw : tape->context_raw) = rows_of(stream);
        tape->left_forward = std::move(fwd);
      }
      break;
    }
    case ArchitectureKind::ParallelRnn: {
      check_stream_dim(face_stream, config.face_feature_dim, "face");
      check_stream_dim(context_stream, config.context_feature_dim, "context");
      std::vector<Vector> face_encoded = encode_stream(*model.face_encoder, face_stream);
      std::vector<Vector> context_encoded =
          encode_stream(*model.context_encoder, context_stream);
      LstmForwardResult face_fwd = forward_stack(*model.left_stack, face_encoded,
                                                 model.left_stack->zero_states());
      LstmForwardResult context_fwd = forward_stack(
          *model.right_stack, context_encoded, model.right_stack->zero_states());
      Vector cat = concat(face_fwd.top_hidden.back(), context_fwd.top_hidden.back());
      Vector fused = model.fusion->apply(cat);
      for (int j = 0; j < fused.size(); ++j) fused[j] = std::tanh(fused[j]);
      head_input = fused;
      if (want_tape) {
        tape->face_raw = rows_of(face_stream);
        tape->context_raw = rows_of(context_stream);
        tape->left_forward = std::move(face_fwd);
        tape->right_forward = std::move(context_fwd);
        tape->fusion_cat = std::move(cat);
        tape->fusion_out = fused;
      }
      break;
    }
    case ArchitectureKind::ConcatenatedRnn: {
      check_stream_dim(face_stream, config.face_feature_dim, "face");
      check_stream_dim(context_stream, config.context_feature_dim, "context");
      std::vector<Vector> inputs;
      inputs.reserve(static_cast<std::size_t>(face_stream.rows()));
      for (int t = 0; t < face_stream.rows(); ++t) {
        inputs.push_back(concat(model.face_encoder->apply(face_stream.row_vector(t)),
                                model.context_encoder->apply(context_stream.row_vector(t))));
      }
      LstmForwardResult fwd =
          forward_stack(*model.left_stack, inputs, model.left_stack->zero_states());
      head_input = fwd.top_hidden.back();
      if (want_tape) {
        tape->face_raw = rows_of(face_stream);
        tape->context_raw = rows_of(context_stream);
        tape->left_forward = std::move(fwd);
      }
      break;
    }
    case ArchitectureKind::CacaA:
    case ArchitectureKind::CacaB: {
      check_stream_dim(face_stream, config.face_feature_dim, "face");
      check_stream_dim(context_stream, config.context_feature_dim, "context");
      // A: left reads context, right reads face. B swaps the roles.
      const bool left_is_context = config.kind == ArchitectureKind::CacaA;
      const Matrix& left_stream = left_is_context ? context_stream : face_stream;
      const Matrix& right_stream = left_is_context ? face_stream : context_stream;
      const LinearLayer& left_encoder =
          left_is_context ? *model.context_encoder : *model.face_encoder;
      const LinearLayer& right_encoder =
          left_is_context ? *model.face_encoder : *model.context_encoder;

      std::vector<Vector> left_encoded = encode_stream(left_encoder, left_stream);
      LstmForwardResult left_fwd = forward_stack(*model.left_stack, left_encoded,
                                                 model.left_stack->zero_states());

      // Cascade hand-off: right layer k starts from left layer k's final
      // state; extra right layers start at zero.
      std::vector<LstmState> right_init = model.right_stack->zero_states();
      const int paired = std::min(model.left_stack->num_layers(),
                                  model.right_stack->num_layers());
      for (int l = 0; l < paired; ++l) {
        right_init[static_cast<std::size_t>(l)] =
            left_fwd.final_states[static_cast<std::size_t>(l)];
      }

      std::vector<Vector> right_encoded = encode_stream(right_encoder, right_stream);
      LstmForwardResult right_fwd =
          forward_stack(*model.right_stack, right_encoded, right_init);

      // Attend at every right step; only the last combined vector feeds the
      // classifier, the rest exist for alignment export.
      const int steps = static_cast<int>(right_fwd.top_hidden.size());
      if (want_tape) tape->attention_steps.resize(static_cast<std::size_t>(steps));
      Vector last_combined(config.hidden_size);
      for (int t = 0; t < steps; ++t) {
        AttentionTape* attn_tape =
            want_tape ? &tape->attention_steps[static_cast<std::size_t>(t)] : nullptr;
        AttentionOutput out =
            attend(right_fwd.top_hidden[static_cast<std::size_t>(t)],
                   left_fwd.top_hidden, *model.attention_combine, attn_tape);
        if (t == steps - 1) last_combined = std::move(out.combined);
      }
      head_input = last_combined;
      if (want_tape) {
        tape->face_raw = rows_of(face_stream);
        tape->context_raw = rows_of(context_stream);
        tape->left_forward = std::move(left_fwd);
        tape->right_forward = std::move(right_fwd);
      }
      break;
    }
  }

  ClipPrediction pred = classify(model, head_input);
  if (want_tape) {
    tape->head_input = std::move(head_input);
    tape->prediction = pred;
  }
  return pred;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

/// dL/dx for y = Wx + b, accumulating dW and db.
Vector linear_backward(const LinearLayer& layer, const Vector& x,
                       const Vector& grad_out, LinearLayer& grads) {
  add_outer(grad_out, x, grads.w);
  for (int j = 0; j < grad_out.size(); ++j) grads.b[j] += grad_out[j];
  Vector dx(layer.w.cols());
  matvec_t_acc(layer.w, grad_out, dx);
  return dx;
}

/// Backward through a per-step encoder: grads for the encoder parameters
/// and optionally the raw inputs.
void encoder_backward(const LinearLayer& encoder, const std::vector<Vector>& raw,
                      const std::vector<Vector>& grad_encoded,
                      LinearLayer& encoder_grads, std::vector<Vector>* raw_grads) {
  for (std::size_t t = 0; t < raw.size(); ++t) {
    Vector dx = linear_backward(encoder, raw[t], grad_encoded[t], encoder_grads);
    if (raw_grads != nullptr) raw_grads->push_back(std::move(dx));
  }
}

std::vector<Vector> zero_vectors(int count, int size) {
  return std::vector<Vector>(static_cast<std::size_t>(count), Vector(size));
}

std::vector<LstmState> zero_states_like(const LstmStack& stack) {
  return stack.zero_states();
}

}  // namespace

Model backward_clip(const Model& model, const ClipTape& tape,
                    const Vector& grad_logits, ClipInputGrads* input_grads) {
  const ModelConfig& config = model.config;
  if (grad_logits.size() != config.num_classes) {
    throw ContractError("backward_clip: grad_logits size " +
                        std::to_string(grad_logits.size()) + " != num_classes " +
                        std::to_string(config.num_classes));
  }
  if (tape.head_input.size() != config.hidden_size) {
    throw ContractError("backward_clip: tape does not match this model");
  }
  Model grads = zeros_like(model);

  Vector d_head = linear_backward(*model.classifier, tape.head_input, grad_logits,
                                  *grads.classifier);

  switch (config.kind) {
    case ArchitectureKind::FaceRnn:
    case ArchitectureKind::ContextRnn: {
      const bool face = config.kind == ArchitectureKind::FaceRnn;
      const int steps = tape.left_forward.tape.time_steps;
      std::vector<Vector> grad_top = zero_vectors(steps, config.hidden_size);
      grad_top.back() = d_head;
      LstmBackwardResult bwd =
          lstm_backward(*model.left_stack, tape.left_forward.tape, grad_top,
                        zero_states_like(*model.left_stack));
      grads.left_stack->layers = std::move(bwd.param_grads);
      const std::vector<Vector>& raw = face ? tape.face_raw : tape.context_raw;
      std::vector<Vector>* raw_out = nullptr;
      if (input_grads != nullptr) raw_out = face ? &input_grads->face : &input_grads->context;
      encoder_backward(face ? *model.face_encoder : *model.context_encoder, raw,
                       bwd.input_grads,
                       face ? *grads.face_encoder : *grads.context_encoder, raw_out);
      if (input_grads != nullptr) {
        // The unused stream gets explicit zero gradients.
        auto& other = face ? input_grads->context : input_grads->face;
        const int dim = face ? config.context_feature_dim : config.face_feature_dim;
        other = zero_vectors(steps, std::max(1, dim));
      }
      break;
    }
    case ArchitectureKind::ParallelRnn: {
      Vector d_pre(d_head.size());
      for (int j = 0; j < d_head.size(); ++j) {
        d_pre[j] = d_head[j] * (1.0 - tape.fusion_out[j] * tape.fusion_out[j]);
      }
      Vector d_cat = linear_backward(*model.fusion, tape.fusion_cat, d_pre, *grads.fusion);

      const int left_hidden = model.left_stack->hidden_size();
      const int left_steps = tape.left_forward.tape.time_steps;
      std::vector<Vector> grad_left_top = zero_vectors(left_steps, left_hidden);
      for (int j = 0; j < left_hidden; ++j) grad_left_top.back()[j] = d_cat[j];
      LstmBackwardResult left_bwd =
          lstm_backward(*model.left_stack, tape.left_forward.tape, grad_left_top,
                        zero_states_like(*model.left_stack));
      grads.left_stack->layers = std::move(left_bwd.param_grads);

      const int right_hidden = model.right_stack->hidden_size();
      const int right_steps = tape.right_forward->tape.time_steps;
      std::vector<Vector> grad_right_top = zero_vectors(right_steps, right_hidden);
      for (int j = 0; j < right_hidden; ++j) {
        grad_right_top.back()[j] = d_cat[left_hidden + j];
      }
      LstmBackwardResult right_bwd =
          lstm_backward(*model.right_stack, tape.right_forward->tape, grad_right_top,
                        zero_states_like(*model.right_stack));
      grads.right_stack->layers = std::move(right_bwd.param_grads);

      encoder_backward(*model.face_encoder, tape.face_raw, left_bwd.input_grads,
                       *grads.face_encoder,
                       input_grads != nullptr ? &input_grads->face : nullptr);
      encoder_backward(*model.context_encoder, tape.context_raw,
                       right_bwd.input_grads, *grads.context_encoder,
                       input_grads != nullptr ? &input_grads->context : nullptr);
      break;
    }
    case ArchitectureKind::ConcatenatedRnn: {
      const int steps = tape.left_forward.tape.time_steps;
      std::vector<Vector> grad_top = zero_vectors(steps, config.hidden_size);
      grad_top.back() = d_head;
      LstmBackwardResult bwd =
          lstm_backward(*model.left_stack, tape.left_forward.tape, grad_top,
                        zero_states_like(*model.left_stack));
      grads.left_stack->layers = std::move(bwd.param_grads);

      // Split the concatenated input gradients back into the two encoders.
      const int encoded = config.encoded_dim;
      std::vector<Vector> d_face, d_context;
      d_face.reserve(bwd.input_grads.size());
      d_context.reserve(bwd.input_grads.size());
      for (const Vector& dz : bwd.input_grads) {
        d_face.push_back(Vector::from(dz.span().subspan(0, encoded)));
        d_context.push_back(Vector::from(dz.span().subspan(encoded, encoded)));
      }
      encoder_backward(*model.face_encoder, tape.face_raw, d_face,
                       *grads.face_encoder,
                       input_grads != nullptr ? &input_grads->face : nullptr);
      encoder_backward(*model.context_encoder, tape.context_raw, d_context,
                       *grads.context_encoder,
                       input_grads != nullptr ? &input_grads->context : nullptr);
      break;
    }
    case ArchitectureKind::CacaA:
    case ArchitectureKind::CacaB: {
      const bool left_is_context = config.kind == ArchitectureKind::CacaA;
      const int hidden = config.hidden_size;
      const int right_steps = tape.right_forward->tape.time_steps;
      const int left_steps = tape.left_forward.tape.time_steps;

      // Only the final attention step feeds the loss.
      const AttentionTape& attn_tape = tape.attention_steps.back();
      AttentionGrads attn_grads =
          attend_backward(*model.attention_combine, attn_tape, d_head);
      for (double& v : grads.attention_combine->span()) v = 0.0;
      for (int r = 0; r < grads.attention_combine->rows(); ++r) {
        for (int c = 0; c < grads.attention_combine->cols(); ++c) {
          (*grads.attention_combine)(r, c) = attn_grads.w_combine(r, c);
        }
      }

      std::vector<Vector> grad_right_top = zero_vectors(right_steps, hidden);
      grad_right_top.back() = attn_grads.query;
      LstmBackwardResult right_bwd =
          lstm_backward(*model.right_stack, tape.right_forward->tape,
                        grad_right_top, zero_states_like(*model.right_stack));
      grads.right_stack->layers = std::move(right_bwd.param_grads);

      // Cascade hand-off carries gradient into the left finals; attention
      // carries gradient into every left top hidden.
      std::vector<Vector> grad_left_top(attn_grads.encoder_hiddens.begin(),
                                        attn_grads.encoder_hiddens.end());
      std::vector<LstmState> grad_left_final = zero_states_like(*model.left_stack);
      const int paired = std::min(model.left_stack->num_layers(),
                                  model.right_stack->num_layers());
      for (int l = 0; l < paired; ++l) {
        grad_left_final[static_cast<std::size_t>(l)] =
            right_bwd.init_state_grads[static_cast<std::size_t>(l)];
      }
      LstmBackwardResult left_bwd =
          lstm_backward(*model.left_stack, tape.left_forward.tape, grad_left_top,
                        grad_left_final);
      grads.left_stack->layers = std::move(left_bwd.param_grads);

      const std::vector<Vector>& left_raw =
          left_is_context ? tape.context_raw : tape.face_raw;
      const std::vector<Vector>& right_raw =
          left_is_context ? tape.face_raw : tape.context_raw;
      LinearLayer& left_encoder_grads =
          left_is_context ? *grads.context_encoder : *grads.face_encoder;
      LinearLayer& right_encoder_grads =
          left_is_context ? *grads.face_encoder : *grads.context_encoder;
      std::vector<Vector>* left_raw_out = nullptr;
      std::vector<Vector>* right_raw_out = nullptr;
      if (input_grads != nullptr) {
        left_raw_out = left_is_context ? &input_grads->context : &input_grads->face;
        right_raw_out = left_is_context ? &input_grads->face : &input_grads->context;
      }
      encoder_backward(left_is_context ? *model.context_encoder : *model.face_encoder,
                       left_raw, left_bwd.input_grads, left_encoder_grads,
                       left_raw_out);
      encoder_backward(left_is_context ? *model.face_encoder : *model.context_encoder,
                       right_raw, right_bwd.input_grads, right_encoder_grads,
                       right_raw_out);
      (void)left_steps;
      break;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[4] = {'C', 'A', 'R', 'N'};
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Model& model, std::ostream& os) {
  const ModelConfig& config = model.config;
  io::write_bytes(os, kCheckpointMagic, 4);
  io::write_u16(os, kCheckpointVersion);
  io::write_u8(os, static_cast<std::uint8_t>(config.kind));
  io::write_i32(os, config.face_feature_dim);
  io::write_i32(os, config.context_feature_dim);
  io::write_i32(os, config.encoded_dim);
  io::write_i32(os, config.hidden_size);
  io::write_i32(os, config.right_hidden_size);
  io::write_i32(os, config.left_layers);
  io::write_i32(os, config.right_layers);
  io::write_i32(os, config.num_classes);
  io::write_u64(os, config.seed);
  std::vector<ParamView> views;
  enumerate_views(const_cast<Model&>(model), views);
  for (const ParamView& v : views) io::write_f64_block(os, v.data);
  if (!os) throw FormatError("save_checkpoint: write failed");
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("save_checkpoint: cannot open " + path.string());
  save_checkpoint(model, os);
}

Model load_checkpoint(std::istream& is,
                      std::optional<ArchitectureKind> expected_kind) {
  io::Reader reader(is);
  reader.expect_magic(kCheckpointMagic, "checkpoint");
  const std::uint16_t version = reader.read_u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig config;
  const std::uint8_t kind_byte = reader.read_u8("kind");
  if (kind_byte > static_cast<std::uint8_t>(ArchitectureKind::CacaB)) {
    throw FormatError("checkpoint kind byte " + std::to_string(kind_byte) +
                      " out of range at byte offset 6");
  }
  config.kind = static_cast<ArchitectureKind>(kind_byte);
  config.face_feature_dim = reader.read_i32("face_feature_dim");
  config.context_feature_dim = reader.read_i32("context_feature_dim");
  config.encoded_dim = reader.read_i32("encoded_dim");
  config.hidden_size = reader.read_i32("hidden_size");
  config.right_hidden_size = reader.read_i32("right_hidden_size");
  config.left_layers = reader.read_i32("left_layers");
  config.right_layers = reader.read_i32("right_layers");
  config.num_classes = reader.read_i32("num_classes");
  config.seed = reader.read_u64("seed");
  if (expected_kind && config.kind != *expected_kind) {
    throw ConfigError(std::string("checkpoint holds a ") + to_string(config.kind) +
                      " model but " + to_string(*expected_kind) + " was requested");
  }
  Model model = make_structure(config);
  for (ParamView& v : model.param_views()) {
    reader.read_f64_block(v.data, v.name.c_str());
  }
  if (!reader.at_eof()) {
    throw FormatError("checkpoint has trailing bytes at offset " +
                      std::to_string(reader.offset()));
  }
  return model;
}

Model load_checkpoint(const std::filesystem::path& path,
                      std::optional<ArchitectureKind> expected_kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_checkpoint: cannot open " + path.string());
  return load_checkpoint(is, expected_kind);
}

}  // namespace cascade
