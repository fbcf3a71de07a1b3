#pragma once

#include <span>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

/// Softmax-normalized weights over encoder time; positive, sum 1.
struct AlignmentRow {
  Vector weights;
};

struct AttentionOutput {
  Vector context;         // convex combination of encoder hiddens
  AlignmentRow alignment;
  Vector combined;        // tanh(W_c [context; query]), fed to the classifier
};

struct AttentionTape {
  Vector query;
  std::vector<Vector> encoder_hiddens;
  Vector alignment;
  Vector context;
  Vector cat;       // [context; query]
  Vector combined;
};

/// Dot score between query and one encoder hidden state. The length check
/// is where the equal-hidden-size rule of cascade configs is enforced.
double dot_score(const Vector& h_query, const Vector& h_encoder);

/// Soft dot global attention: alignment = softmax of dot scores, context =
/// alignment-weighted sum of encoder hiddens, combined = tanh(W_c [context;
/// query]). w_combine is H x 2H and owned by the model.
AttentionOutput attend(const Vector& h_query,
                       std::span<const Vector> encoder_hiddens,
                       const Matrix& w_combine, AttentionTape* tape = nullptr);

struct AttentionGrads {
  Vector query;
  std::vector<Vector> encoder_hiddens;
  Matrix w_combine;
};

/// Exact gradients through attend. grad_context and grad_alignment add
/// direct gradients on those outputs when the loss reads them; pass nullptr
/// otherwise.
AttentionGrads attend_backward(const Matrix& w_combine,
                               const AttentionTape& tape,
                               const Vector& grad_combined,
                               const Vector* grad_context = nullptr,
                               const Vector* grad_alignment = nullptr);

}  // namespace cascade
