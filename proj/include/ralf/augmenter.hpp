#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ralf/concept_store.hpp"
#include "ralf/embedding_store.hpp"

namespace ralf {

enum class Activation { Relu, Gelu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Shape of the augmenter. Defaults: k=50 concepts, 6 decoder layers, 8 heads,
/// 2048-wide FFN, at the CLIP ViT-B/32 width.
struct AugmenterConfig {
  std::size_t dim = 512;
  std::size_t ffn_dim = 2048;
  std::size_t heads = 8;
  std::size_t layers = 6;
  std::size_t k = 50;
  Activation activation = Activation::Gelu;

  /// Throws InvalidArgument on zero sizes or heads not dividing dim.
  void validate() const;
};

struct RafHyperParams {
  std::size_t k = 50;
  std::size_t layers = 6;
  std::size_t heads = 8;
  std::size_t ffn_dim = 2048;
  Activation activation = Activation::Gelu;
  double beta_cls = 5.0;
  double beta_reg = 1.0;
  double learning_rate = 1e-2;
  std::size_t iterations = 100;

  AugmenterConfig augmenter_config(std::size_t dim) const {
    return {dim, ffn_dim, heads, layers, k, activation};
  }
};

struct DecoderLayerParams {
  Matrix wq, wk, wv, wo;  // dim x dim, applied as W x
  Matrix ffn_w1;          // ffn_dim x dim
  Vector ffn_b1;          // ffn_dim
  Matrix ffn_w2;          // dim x ffn_dim
  Vector ffn_b2;          // dim
};

/// Every learnable tensor of the augmenter. Gradients use the same type.
struct AugmenterParams {
  AugmenterConfig config;
  Matrix proj_w;  // dim x dim
  Vector proj_b;
  std::vector<DecoderLayerParams> layers;
  Vector query_seed;  // q_1
  Matrix pos_embed;   // k x dim
  Vector type0;
  Vector type1;

  /// All-zero tensors of the right shapes.
  static AugmenterParams zeros(const AugmenterConfig& config);
  /// Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, query seed and
  /// positional/type embeddings N(0, 0.02^2). Deterministic per seed.
  static AugmenterParams initialize(const AugmenterConfig& config, std::uint64_t seed);

  /// Tensors in checkpoint declaration order.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;

  /// Throws ShapeMismatch if any tensor disagrees with `config`.
  void check_shapes() const;

  bool operator==(const AugmenterParams&) const;
};

struct RafBatch {
  Matrix visual_features;  // N x dim, rows unit norm
  std::vector<RetrievedConcepts> retrieved;
};

struct RafLoss {
  double loss = 0.0;
  double cls = 0.0;
  double reg = 0.0;
};

struct RafGradient {
  RafLoss loss;
  AugmenterParams grad;
};

/// Key/value memory: row 0 = v_r + type0, row i = softmax(s)_i H_i + pos_i + type1.
Matrix build_M(std::span<const double> v_r, const RetrievedConcepts& retrieved,
               const AugmenterParams& params);

/// Runs the L residual cross-attention + FFN layers from the query seed.
Vector decoder_forward(const Matrix& M, const AugmenterParams& params);

/// Proj(v_r) + decoder output, before normalization.
Vector augment_unnormalized(std::span<const double> v_r, const RetrievedConcepts& retrieved,
                            const AugmenterParams& params);
/// Unit-norm augmented feature.
Vector augment(std::span<const double> v_r, const RetrievedConcepts& retrieved,
               const AugmenterParams& params);

/// <v_aug, T(c)> for every category row.
Vector aux_logits(std::span<const double> v_aug, const EmbeddingTable& categories);

/// -log softmax(logits)[label], computed with the max shifted out.
double cross_entropy(std::span<const double> logits, std::size_t label);

/// Row of `train_categories` most similar to v_r, lowest index on ties.
std::size_t pseudo_label(std::span<const double> v_r, const EmbeddingTable& train_categories);

RafLoss raf_loss(const RafBatch& batch, const AugmenterParams& params,
                 const EmbeddingTable& train_categories, const RafHyperParams& hp);

/// Exact gradient of `raf_loss` w.r.t. every parameter tensor. Proposals are
/// split into a fixed number of contiguous blocks reduced in block order, so
/// the result does not depend on the thread count. Throws NonFiniteGradient.
RafGradient raf_grad(const RafBatch& batch, const AugmenterParams& params,
                     const EmbeddingTable& train_categories, const RafHyperParams& hp);

/// Single-threaded accumulation in proposal order; kept for testing.
RafGradient raf_grad_reference(const RafBatch& batch, const AugmenterParams& params,
                               const EmbeddingTable& train_categories, const RafHyperParams& hp);

struct TracePoint {
  std::size_t iteration = 0;
  RafLoss loss;
};

struct TrainResult {
  AugmenterParams params;
  std::vector<TracePoint> trace;  // loss before each update
};

/// Plain gradient descent; iteration i uses batches[i % batches.size()].
/// Throws DivergenceDetected on a non-finite loss.
TrainResult train(const std::vector<RafBatch>& batches, AugmenterParams params,
                  const EmbeddingTable& train_categories, const RafHyperParams& hp);

// Checkpoint: "RALF-AUG", u32 version, u32 dim, ffn_dim, heads, layers, k,
// then every tensor as f32, all little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const AugmenterParams& params);
/// The activation is not part of the file; pass the one the model was trained with.
AugmenterParams read_checkpoint(const std::filesystem::path& path,
                                Activation activation = Activation::Gelu);

void write_loss_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace);

}  // namespace ralf
