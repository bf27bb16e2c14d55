#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ralf/embedding_store.hpp"

namespace ralf {

/// Triplet-loss weights and margins. Defaults are the OADP / COCO preset.
struct RalHyperParams {
  double lambda_hard = 1.0;
  double lambda_easy = 5.0;
  double alpha_hard = 0.0;
  double alpha_easy = 1.0;
  double beta_hard = 1.0;
  double beta_easy = 1.0;
  std::size_t n = 10;
};

/// Preset per (baseline, dataset): baseline is one of oadp | ocovd | detpro,
/// dataset one of coco | lvis. Throws InvalidArgument for detpro/coco, which
/// has no preset.
RalHyperParams ral_preset(std::string_view baseline, std::string_view dataset);

struct RalBatchItem {
  Vector box_embedding;
  std::string label;
  std::vector<std::string> hard_n;
  std::vector<std::string> easy_n;
};

struct RalItemResult {
  double sim_gt = 0.0;
  double u_hard = 0.0;
  double u_easy = 0.0;
  double loss_hard = 0.0;
  double loss_easy = 0.0;
  double loss = 0.0;  // beta_hard * loss_hard + beta_easy * loss_easy
  /// Gradient of the batch-mean loss with respect to this item's box embedding.
  Vector grad;
};

struct RalResult {
  double loss = 0.0;
  double loss_hard = 0.0;  // batch mean of the unweighted hard hinge
  double loss_easy = 0.0;
  std::vector<RalItemResult> items;
};

/// Mean of <T(v), e_b> over `names`. Throws UnknownName.
double avg_similarity(const std::vector<std::string>& names, const EmbeddingTable& table,
                      std::span<const double> e_b);

double hard_loss(double u_hard, double sim_gt, const RalHyperParams& hp);
double easy_loss(double u_easy, double u_hard, const RalHyperParams& hp);

/// Mean over the batch of beta_hard * L_hard + beta_easy * L_easy, with the
/// exact gradient per box embedding. A hinge whose argument is <= 0 takes the
/// zero branch.
RalResult ral_total(const std::vector<RalBatchItem>& batch, const EmbeddingTable& base,
                    const EmbeddingTable& vocab, const RalHyperParams& hp);

}  // namespace ralf
