#include "ralf/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "ralf/embedding_store.hpp"
#include "ralf/error.hpp"

namespace ralf {

EnsembleMode ensemble_mode_from_string(std::string_view s) {
  if (s == "ocovd") return EnsembleMode::AdditiveSigmoid;
  if (s == "detpro") return EnsembleMode::MultiplicativeDetpro;
  if (s == "oadp") return EnsembleMode::AdditiveRaw;
  throw Error(ErrorCode::InvalidArgument, "unknown ensemble mode '" + std::string(s) +
                                              "' (expected ocovd, detpro or oadp)");
}

std::string_view to_cli_string(EnsembleMode m) {
  switch (m) {
    case EnsembleMode::AdditiveSigmoid: return "ocovd";
    case EnsembleMode::MultiplicativeDetpro: return "detpro";
    case EnsembleMode::AdditiveRaw: return "oadp";
  }
  return "oadp";
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector ensemble(std::span<const double> base, std::span<const double> aux, EnsembleMode mode,
                std::size_t truncate_top) {
  if (base.size() != aux.size()) {
    throw Error(ErrorCode::LengthMismatch, "base has " + std::to_string(base.size()) +
                                               " logits, aux has " + std::to_string(aux.size()));
  }
  if (truncate_top > base.size()) {
    throw Error(ErrorCode::BadTruncate, "truncate_top " + std::to_string(truncate_top) +
                                            " exceeds logit count " + std::to_string(base.size()));
  }
  Vector out(base.begin(), base.end());
  if (truncate_top == 0) return out;
  for (auto i : select_top(aux, truncate_top).indices) {
    switch (mode) {
      case EnsembleMode::AdditiveSigmoid: out[i] = base[i] + sigmoid(aux[i]); break;
      case EnsembleMode::MultiplicativeDetpro: out[i] = base[i] * (sigmoid(aux[i]) - 0.25); break;
      case EnsembleMode::AdditiveRaw: out[i] = base[i] + aux[i]; break;
    }
  }
  return out;
}

Matrix ensemble_rows(const Matrix& base, const Matrix& aux, EnsembleMode mode,
                     std::size_t truncate_top) {
  if (base.rows != aux.rows || base.cols != aux.cols) {
    throw Error(ErrorCode::LengthMismatch, "base and aux logit matrices differ in shape");
  }
  if (truncate_top > base.cols) {
    throw Error(ErrorCode::BadTruncate, "truncate_top exceeds logit count");
  }
  Matrix out(base.rows, base.cols);
  const auto n = static_cast<std::int64_t>(base.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto row = ensemble(base.row(r), aux.row(r), mode, truncate_top);
    std::ranges::copy(row, out.row(r).begin());
  }
  return out;
}

std::size_t classify(std::span<const double> final_logits) {
  if (final_logits.empty()) throw Error(ErrorCode::InvalidArgument, "empty logit vector");
  return static_cast<std::size_t>(std::ranges::max_element(final_logits) - final_logits.begin());
}

}  // namespace ralf
