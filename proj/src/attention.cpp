#include "cascade/attention.hpp"

#include <cmath>
#include <string>

namespace cascade {

double dot_score(const Vector& h_query, const Vector& h_encoder) {
  if (h_query.size() != h_encoder.size()) {
    throw DimensionError(
        "dot_score: query size " + std::to_string(h_query.size()) +
        " != encoder size " + std::to_string(h_encoder.size()) +
        " (dot attention needs equal encoder/decoder hidden sizes)");
  }
  return dot(h_query, h_encoder);
}

AttentionOutput attend(const Vector& h_query,
                       std::span<const Vector> encoder_hiddens,
                       const Matrix& w_combine, AttentionTape* tape) {
  if (encoder_hiddens.empty()) {
    throw ArgumentError("attend: empty encoder sequence");
  }
  const int h_size = h_query.size();
  if (w_combine.rows() != h_size || w_combine.cols() != 2 * h_size) {
    throw DimensionError("attend: w_combine must be H x 2H, got " +
                         detail::shape_string(w_combine));
  }
  const int steps = static_cast<int>(encoder_hiddens.size());

  Vector scores(steps);
  for (int t = 0; t < steps; ++t) {
    scores[t] = dot_score(h_query, encoder_hiddens[t]);
  }
  Vector alignment = softmax(scores);

  Vector context(h_size);
  for (int t = 0; t < steps; ++t) {
    const double a = alignment[t];
    for (int j = 0; j < h_size; ++j) context[j] += a * encoder_hiddens[t][j];
  }

  Vector cat = concat(context, h_query);
  Vector combined(h_size);
  matvec(w_combine, cat, combined);
  for (int j = 0; j < h_size; ++j) combined[j] = std::tanh(combined[j]);

  if (tape != nullptr) {
    tape->query = h_query;
    tape->encoder_hiddens.assign(encoder_hiddens.begin(), encoder_hiddens.end());
    tape->alignment = alignment;
    tape->context = context;
    tape->cat = cat;
    tape->combined = combined;
  }
  return AttentionOutput{std::move(context), AlignmentRow{std::move(alignment)},
                         std::move(combined)};
}

AttentionGrads attend_backward(const Matrix& w_combine,
                               const AttentionTape& tape,
                               const Vector& grad_combined,
                               const Vector* grad_context,
                               const Vector* grad_alignment) {
  const int h_size = tape.query.size();
  const int steps = static_cast<int>(tape.encoder_hiddens.size());
  if (grad_combined.size() != h_size) {
    throw ContractError("attend_backward: grad_combined size mismatch");
  }
  if (grad_context != nullptr && grad_context->size() != h_size) {
    throw ContractError("attend_backward: grad_context size mismatch");
  }
  if (grad_alignment != nullptr && grad_alignment->size() != steps) {
    throw ContractError("attend_backward: grad_alignment size mismatch");
  }
  if (w_combine.rows() != h_size || w_combine.cols() != 2 * h_size) {
    throw ContractError("attend_backward: w_combine shape mismatch");
  }

  // tanh and combination matrix.
  Vector d_pre(h_size);
  for (int j = 0; j < h_size; ++j) {
    d_pre[j] = grad_combined[j] * (1.0 - tape.combined[j] * tape.combined[j]);
  }
  AttentionGrads grads{Vector(h_size), {}, Matrix(h_size, 2 * h_size)};
  add_outer(d_pre, tape.cat, grads.w_combine);
  Vector d_cat(2 * h_size);
  matvec_t_acc(w_combine, d_pre, d_cat);

  Vector d_context(h_size);
  for (int j = 0; j < h_size; ++j) {
    d_context[j] = d_cat[j] + (grad_context != nullptr ? (*grad_context)[j] : 0.0);
    grads.query[j] = d_cat[h_size + j];
  }

  // Weighted sum: context = sum_t a_t e_t.
  Vector d_align(steps);
  grads.encoder_hiddens.assign(steps, Vector(h_size));
  for (int t = 0; t < steps; ++t) {
    d_align[t] = dot(d_context, tape.encoder_hiddens[static_cast<std::size_t>(t)]);
    if (grad_alignment != nullptr) d_align[t] += (*grad_alignment)[t];
    Vector& d_enc = grads.encoder_hiddens[static_cast<std::size_t>(t)];
    const double a = tape.alignment[t];
    for (int j = 0; j < h_size; ++j) d_enc[j] = a * d_context[j];
  }

  // Softmax, then the dot scores: s_t = <q, e_t>.
  Vector d_scores = softmax_backward(tape.alignment, d_align);
  for (int t = 0; t < steps; ++t) {
    const double ds = d_scores[t];
    const Vector& enc = tape.encoder_hiddens[static_cast<std::size_t>(t)];
    Vector& d_enc = grads.encoder_hiddens[static_cast<std::size_t>(t)];
    for (int j = 0; j < h_size; ++j) {
      grads.query[j] += ds * enc[j];
      d_enc[j] += ds * tape.query[j];
    }
  }
  return grads;
}

}  // namespace cascade
