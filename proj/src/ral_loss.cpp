#include "ralf/ral_loss.hpp"

#include <algorithm>
#include <cstdint>

#include "ralf/error.hpp"

namespace ralf {

namespace {

Vector mean_row(const std::vector<std::string>& names, const EmbeddingTable& table) {
  Vector mean(table.dim(), 0.0);
  for (const auto& name : names) {
    const auto row = table.row(table.index_of(name));
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += row[d];
  }
  for (double& x : mean) x /= static_cast<double>(names.size());
  return mean;
}

}  // namespace

RalHyperParams ral_preset(std::string_view baseline, std::string_view dataset) {
  RalHyperParams hp;
  if (baseline == "oadp" && dataset == "coco") {
    hp.lambda_easy = 5.0;
  } else if (baseline == "oadp" && dataset == "lvis") {
    hp.lambda_easy = 10.0;
  } else if (baseline == "ocovd" && dataset == "coco") {
    hp.lambda_easy = 10.0;
  } else if (baseline == "ocovd" && dataset == "lvis") {
    hp.lambda_easy = 5.0;
  } else if (baseline == "detpro" && dataset == "lvis") {
    hp.lambda_easy = 10.0;
  } else {
    throw Error(ErrorCode::InvalidArgument, "no RAL preset for " +
                                                std::string(baseline) + "/" + std::string(dataset));
  }
  return hp;
}

double avg_similarity(const std::vector<std::string>& names, const EmbeddingTable& table,
                      std::span<const double> e_b) {
  if (names.empty()) throw Error(ErrorCode::InvalidArgument, "empty vocabulary sample");
  if (e_b.size() != table.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "box embedding dim mismatch");
  }
  double sum = 0.0;
  for (const auto& name : names) sum += dot(table.row(table.index_of(name)), e_b);
  return sum / static_cast<double>(names.size());
}

double hard_loss(double u_hard, double sim_gt, const RalHyperParams& hp) {
  return std::max(hp.lambda_hard * u_hard - sim_gt + hp.alpha_hard, 0.0);
}

double easy_loss(double u_easy, double u_hard, const RalHyperParams& hp) {
  return std::max(hp.lambda_easy * u_easy - u_hard + hp.alpha_easy, 0.0);
}

RalResult ral_total(const std::vector<RalBatchItem>& batch, const EmbeddingTable& base,
                    const EmbeddingTable& vocab, const RalHyperParams& hp) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty RAL batch");
  if (base.dim() != vocab.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "base/vocabulary dimension mismatch");
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  RalResult out;
  out.items.resize(batch.size());

  // Lookups throw, so resolve names before entering the parallel region.
  std::vector<std::size_t> label_rows(batch.size());
  std::vector<Vector> hard_means(batch.size()), easy_means(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& item = batch[b];
    if (item.box_embedding.size() != base.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "box embedding dim mismatch in item " +
                                                    std::to_string(b));
    }
    if (item.hard_n.empty() || item.easy_n.empty()) {
      throw Error(ErrorCode::InvalidArgument, "empty negative sample in item " + std::to_string(b));
    }
    auto row = base.find(item.label);
    if (!row) throw Error(ErrorCode::UnknownName, "unknown label '" + item.label + "'");
    label_rows[b] = *row;
    hard_means[b] = mean_row(item.hard_n, vocab);
    easy_means[b] = mean_row(item.easy_n, vocab);
  }

  const auto nb = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const auto& e = batch[b].box_embedding;
    const auto gt = base.row(label_rows[b]);
    auto& r = out.items[b];
    r.sim_gt = dot(gt, e);
    r.u_hard = dot(hard_means[b], e);
    r.u_easy = dot(easy_means[b], e);
    const double pre_hard = hp.lambda_hard * r.u_hard - r.sim_gt + hp.alpha_hard;
    const double pre_easy = hp.lambda_easy * r.u_easy - r.u_hard + hp.alpha_easy;
    r.loss_hard = pre_hard > 0.0 ? pre_hard : 0.0;
    r.loss_easy = pre_easy > 0.0 ? pre_easy : 0.0;
    r.loss = hp.beta_hard * r.loss_hard + hp.beta_easy * r.loss_easy;

    r.grad.assign(e.size(), 0.0);
    if (pre_hard > 0.0) {
      const double w = hp.beta_hard * inv_b;
      for (std::size_t d = 0; d < e.size(); ++d) {
        r.grad[d] += w * (hp.lambda_hard * hard_means[b][d] - gt[d]);
      }
    }
    if (pre_easy > 0.0) {
      const double w = hp.beta_easy * inv_b;
      for (std::size_t d = 0; d < e.size(); ++d) {
        r.grad[d] += w * (hp.lambda_easy * easy_means[b][d] - hard_means[b][d]);
      }
    }
  }

  for (const auto& r : out.items) {
    out.loss += r.loss;
    out.loss_hard += r.loss_hard;
    out.loss_easy += r.loss_easy;
  }
  out.loss *= inv_b;
  out.loss_hard *= inv_b;
  out.loss_easy *= inv_b;
  return out;
}

}  // namespace ralf
