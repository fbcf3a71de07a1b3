#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade/attention.hpp"
#include "cascade/rnn.hpp"
#include "cascade/tensor.hpp"

namespace cascade {

enum class ArchitectureKind : std::uint8_t {
  FaceRnn = 0,
  ContextRnn = 1,
  ParallelRnn = 2,
  ConcatenatedRnn = 3,
  CacaA = 4,
  CacaB = 5,
};

constexpr ArchitectureKind kAllArchitectures[] = {
    ArchitectureKind::FaceRnn,     ArchitectureKind::ContextRnn,
    ArchitectureKind::ParallelRnn, ArchitectureKind::ConcatenatedRnn,
    ArchitectureKind::CacaA,       ArchitectureKind::CacaB,
};

const char* to_string(ArchitectureKind kind);
ArchitectureKind parse_architecture(const std::string& name);
bool is_fusion_architecture(ArchitectureKind kind);
bool is_cascade_architecture(ArchitectureKind kind);

struct ModelConfig {
  ArchitectureKind kind = ArchitectureKind::CacaA;
  int face_feature_dim = 0;
  int context_feature_dim = 0;
  int encoded_dim = 128;
  int hidden_size = 128;
  // Hidden size of the second stack (cascade right / parallel second);
  // 0 means hidden_size. Cascade kinds require it to equal hidden_size
  // (dot attention precondition) and reject anything else.
  int right_hidden_size = 0;
  int left_layers = 2;
  int right_layers = 1;
  int num_classes = 8;
  std::uint64_t seed = 0;

  int effective_right_hidden() const {
    return right_hidden_size == 0 ? hidden_size : right_hidden_size;
  }
  void validate() const;
};

/// y = Wx + b.
struct LinearLayer {
  Matrix w;
  Vector b;

  LinearLayer(int out_size, int in_size) : w(out_size, in_size), b(out_size) {}
  void init_params(Rng& rng);
  Vector apply(const Vector& x) const;
  std::size_t param_count() const {
    return w.size() + static_cast<std::size_t>(b.size());
  }
};

/// Named view into one parameter block; enumeration order fixes the
/// checkpoint layout and the optimizer's flat indexing.
struct ParamView {
  std::string name;
  std::span<double> data;
};

/// Assembled architecture. Which components are present depends on the
/// kind; absent components hold no parameters and are skipped in counting
/// and serialization.
struct Model {
  ModelConfig config;
  std::optional<LinearLayer> face_encoder;     // face_feature_dim -> encoded
  std::optional<LinearLayer> context_encoder;  // context_feature_dim -> encoded
  std::optional<LstmStack> left_stack;
  std::optional<LstmStack> right_stack;        // cascade and parallel kinds
  std::optional<Matrix> attention_combine;     // W_c, H x 2H, cascade kinds
  std::optional<LinearLayer> fusion;           // 2H -> H, ParallelRnn only
  std::optional<LinearLayer> classifier;       // H -> num_classes

  std::vector<ParamView> param_views();
  std::size_t param_count() const;
  void zero_params();

  std::vector<double> flatten_params() const;
  void set_params(std::span<const double> flat);
};

/// Zero-parameter model of the same shape; gradient holder.
Model zeros_like(const Model& model);

struct ClipPrediction {
  Vector logits;
  Vector probabilities;
  int predicted_class = 0;
};

/// Per-clip forward record for backward_clip.
struct ClipTape {
  std::vector<Vector> face_raw;
  std::vector<Vector> context_raw;
  LstmForwardResult left_forward;
  std::optional<LstmForwardResult> right_forward;
  std::vector<AttentionTape> attention_steps;  // one per right step
  Vector fusion_cat = Vector(1);  // ParallelRnn: [left_final; right_final]
  Vector fusion_out = Vector(1);  // tanh of the fusion linear output
  Vector head_input = Vector(1);  // classifier input
  ClipPrediction prediction;
};

Model build_model(const ModelConfig& config);

/// Runs the architecture over one clip. Streams are row-per-frame matrices
/// sharing T; single-stream kinds never read the unused stream's values.
ClipPrediction forward_clip(const Model& model, const Matrix& face_stream,
                            const Matrix& context_stream,
                            ClipTape* tape = nullptr);

/// Gradients of the loss w.r.t. the raw input streams (finite-difference
/// probes of the data path use this).
struct ClipInputGrads {
  std::vector<Vector> face;
  std::vector<Vector> context;
};

/// Exact gradients of a scalar loss with dL/dlogits = grad_logits, returned
/// as a zero-initialized mirror of the model with gradients in the
/// parameter slots.
Model backward_clip(const Model& model, const ClipTape& tape,
                    const Vector& grad_logits,
                    ClipInputGrads* input_grads = nullptr);

std::size_t count_params(const Model& model);

/// Checkpoint format: magic "CARN", u16 version, config fields, parameter
/// blocks in declaration order as little-endian f64.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path,
                      std::optional<ArchitectureKind> expected_kind = std::nullopt);

void save_checkpoint(const Model& model, std::ostream& os);
Model load_checkpoint(std::istream& is,
                      std::optional<ArchitectureKind> expected_kind = std::nullopt);

}  // namespace cascade
