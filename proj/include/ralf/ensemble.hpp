#pragma once

#include <span>
#include <string_view>

#include "ralf/matrix.hpp"

namespace ralf {

/// How auxiliary logits are folded into a baseline's logits.
enum class EnsembleMode {
  AdditiveSigmoid,      // Object-Centric-OVD: base + sigmoid(aux)
  MultiplicativeDetpro, // DetPro: base * (sigmoid(aux) - 0.25)
  AdditiveRaw,          // OADP: base + aux
};

/// Accepts the CLI names ocovd | detpro | oadp.
EnsembleMode ensemble_mode_from_string(std::string_view s);
std::string_view to_cli_string(EnsembleMode m);

/// Top-k truncation defaults by benchmark.
inline constexpr std::size_t kCocoTruncateTop = 1;
inline constexpr std::size_t kLvisTruncateTop = 20;

double sigmoid(double x);

/// Applies `mode` on the `truncate_top` largest aux entries (ties by ascending
/// index); every other entry keeps base exactly. Throws LengthMismatch,
/// BadTruncate.
Vector ensemble(std::span<const double> base, std::span<const double> aux, EnsembleMode mode,
                std::size_t truncate_top);

/// Row-wise `ensemble` over per-proposal logit matrices.
Matrix ensemble_rows(const Matrix& base, const Matrix& aux, EnsembleMode mode,
                     std::size_t truncate_top);

/// argmax, lowest index on ties.
std::size_t classify(std::span<const double> final_logits);

}  // namespace ralf
