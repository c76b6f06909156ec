#pragma once

#include "pgan/tensor.hpp"

#include <string>

namespace pgan {

enum class LossKind { OriginalGan, LsGan, Pgan };

/// "original" | "lsgan" | "pgan"
LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind kind);

inline constexpr double kRealTarget = 1.0;
inline constexpr double kFakeTarget = 0.0;

/// Discriminator objective on per-sample outputs, always minimized.
/// OriginalGan: -mean log d_real - mean log(1 - d_fake), outputs must lie in (0,1).
/// LsGan, Pgan: 1/2 mean (d_real - 1)^2 + 1/2 mean d_fake^2.
Tensor disc_loss(LossKind kind, const Tensor& d_real, const Tensor& d_fake);

/// OriginalGan: -mean log d_fake. LsGan, Pgan: 1/2 mean (d_fake - 1)^2.
Tensor gen_loss(LossKind kind, const Tensor& d_fake);

}  // namespace pgan
