#include "pgan/losses.hpp"

#include "pgan/error.hpp"
#include "pgan/ops.hpp"

namespace pgan {

namespace {

void check_scores(const char* op, const Tensor& t) {
    if (t.rank() != 1 || t.numel() == 0) {
        throw ShapeError(std::string(op) + ": expected a nonempty (batch) tensor, got " + shape_str(t.shape()));
    }
}

void check_probabilities(const char* op, const Tensor& t) {
    for (double v : t.data()) {
        if (!(v > 0.0 && v < 1.0)) {
            throw NumericError(std::string(op) + ": original GAN output " + std::to_string(v) + " outside (0,1)");
        }
    }
}

Tensor half_mean_sq(const Tensor& x, double target) { return mul_scalar(mean(square(add_scalar(x, -target))), 0.5); }

}  // namespace

LossKind parse_loss_kind(const std::string& s) {
    if (s == "original") return LossKind::OriginalGan;
    if (s == "lsgan") return LossKind::LsGan;
    if (s == "pgan") return LossKind::Pgan;
    throw ConfigError("unknown loss '" + s + "' (expected original | lsgan | pgan)");
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::OriginalGan: return "original";
        case LossKind::LsGan: return "lsgan";
        case LossKind::Pgan: return "pgan";
    }
    return "?";
}

Tensor disc_loss(LossKind kind, const Tensor& d_real, const Tensor& d_fake) {
    check_scores("disc_loss", d_real);
    check_scores("disc_loss", d_fake);
    if (d_real.numel() != d_fake.numel()) {
        throw ShapeError("disc_loss: real batch " + std::to_string(d_real.numel()) + " vs fake batch " +
                         std::to_string(d_fake.numel()));
    }
    if (kind == LossKind::OriginalGan) {
        check_probabilities("disc_loss", d_real);
        check_probabilities("disc_loss", d_fake);
        return neg(add(mean(log(d_real)), mean(log(add_scalar(neg(d_fake), 1.0)))));
    }
    return add(half_mean_sq(d_real, kRealTarget), half_mean_sq(d_fake, kFakeTarget));
}

Tensor gen_loss(LossKind kind, const Tensor& d_fake) {
    check_scores("gen_loss", d_fake);
    if (kind == LossKind::OriginalGan) {
        check_probabilities("gen_loss", d_fake);
        return neg(mean(log(d_fake)));
    }
    return half_mean_sq(d_fake, kRealTarget);
}

}  // namespace pgan
