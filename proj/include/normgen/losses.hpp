#pragma once

#include "normgen/model.hpp"
#include "normgen/nn/tensor.hpp"

namespace normgen {

using nn::FeatureMap;

template <class Scalar>
Scalar sign_of(Scalar v) {
  return Scalar((v > Scalar(0)) - (v < Scalar(0)));
}

/// Mean over pixels of the per-pixel sum of absolute channel differences.
template <class Scalar>
Scalar l1_loss(const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& y_gen) {
  require_same_shape(y, y_gen, "l1_loss");
  return (y.values - y_gen.values).cwiseAbs().sum() / Scalar(y.values.cols());
}

/// d l1_loss / d y_gen (subgradient 0 where the tensors agree).
template <class Scalar>
FeatureMap<Scalar> l1_loss_grad(const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& y_gen) {
  require_same_shape(y, y_gen, "l1_loss_grad");
  const Scalar inv = Scalar(1) / Scalar(y.values.cols());
  return {(y_gen.values - y.values).unaryExpr([inv](Scalar v) { return inv * sign_of(v); }), y.extent};
}

template <class Scalar>
void require_mask_shape(const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& mask, const char* what) {
  if (mask.channels() != 1 || !(mask.extent == y.extent)) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": mask must be one channel of the image extent");
  }
}

/// Masked L1 normalised by the mask population; 0 for an empty mask.
template <class Scalar>
Scalar mask_loss(const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& y_gen, const FeatureMap<Scalar>& mask) {
  require_same_shape(y, y_gen, "mask_loss");
  require_mask_shape(y, mask, "mask_loss");
  const Scalar population = mask.values.sum();
  if (population == Scalar(0)) return Scalar(0);
  const auto per_pixel = (y.values - y_gen.values).cwiseAbs().colwise().sum();
  return per_pixel.cwiseProduct(mask.values.row(0)).sum() / population;
}

template <class Scalar>
FeatureMap<Scalar> mask_loss_grad(const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& y_gen,
                                  const FeatureMap<Scalar>& mask) {
  require_same_shape(y, y_gen, "mask_loss_grad");
  require_mask_shape(y, mask, "mask_loss_grad");
  FeatureMap<Scalar> g(y.channels(), y.extent);
  const Scalar population = mask.values.sum();
  if (population == Scalar(0)) return g;
  g.values = (y_gen.values - y.values).unaryExpr([](Scalar v) { return sign_of(v); });
  g.values.array().rowwise() *= (mask.values.row(0) / population).array();
  return g;
}

/// Ground truth at hint pixels, generated values elsewhere.
template <class Scalar>
FeatureMap<Scalar> composite_hints(const FeatureMap<Scalar>& y_gen, const FeatureMap<Scalar>& y,
                                   const FeatureMap<Scalar>& mask) {
  require_same_shape(y, y_gen, "composite_hints");
  require_mask_shape(y, mask, "composite_hints");
  FeatureMap<Scalar> out = y_gen;
  for (Eigen::Index col = 0; col < mask.values.cols(); ++col)
    if (mask.values(0, col) != Scalar(0)) out.values.col(col) = y.values.col(col);
  return out;
}

/// Zeroes the gradient at hint pixels (those values came from the ground truth).
template <class Scalar>
FeatureMap<Scalar> composite_hints_backward(FeatureMap<Scalar> d_composited, const FeatureMap<Scalar>& mask) {
  for (Eigen::Index col = 0; col < mask.values.cols(); ++col)
    if (mask.values(0, col) != Scalar(0)) d_composited.values.col(col).setZero();
  return d_composited;
}

/// 7-channel critic input: the generator's condition (sketch + hints) then the normals.
template <class Scalar>
FeatureMap<Scalar> critic_input(const FeatureMap<Scalar>& condition, const FeatureMap<Scalar>& normals) {
  return nn::concat_channels(condition, normals);
}

/// Which tensor the reconstruction terms see.
enum class CompositeScope {
  CriticOnly,  ///< critic sees the composited output, L1/mask see the raw output
  Everywhere,  ///< all terms see the composited output
};

const char* to_string(CompositeScope scope);
CompositeScope parse_composite_scope(const std::string& text);

struct LossWeights {
  double lambda_l1 = 100.0;
  double lambda_mask = 100.0;
  CompositeScope composite_scope = CompositeScope::CriticOnly;
};

/// -(E[D(y|x)] - E[D(y~|x)]) with y~ the hint-composited output. When
/// `accumulate` is set, the critic's parameter gradients of this value are
/// added to its accumulators (one forward/backward pass per side).
template <class Scalar>
Scalar critic_loss(Discriminator<Scalar>& d, const FeatureMap<Scalar>& condition, const FeatureMap<Scalar>& y,
                   const FeatureMap<Scalar>& y_gen, const FeatureMap<Scalar>& mask, bool accumulate = false,
                   const ForwardOptions& opt = {true}) {
  const FeatureMap<Scalar> y_tilde = composite_hints(y_gen, y, mask);
  const int n = y.extent.batch;
  const Scalar real = d.forward(critic_input(condition, y), opt).mean_combined();
  if (accumulate) d.backward(nn::RowVector<Scalar>::Constant(n, Scalar(-1) / Scalar(n)));
  const Scalar fake = d.forward(critic_input(condition, y_tilde), opt).mean_combined();
  if (accumulate) d.backward(nn::RowVector<Scalar>::Constant(n, Scalar(1) / Scalar(n)));
  return -(real - fake);
}

template <class Scalar>
struct GeneratorLoss {
  Scalar total = 0;
  Scalar adversarial = 0;  ///< -E[D(y~|x)]
  Scalar l1 = 0;           ///< unweighted
  Scalar mask = 0;         ///< unweighted
  FeatureMap<Scalar> grad; ///< d total / d y_gen, filled when requested
};

/// -E[D(y~|x)] + lambda_l1 L1 + lambda_mask L_mask, minimised by the generator.
/// With `want_grad`, a backward pass runs through the critic; it also adds to the
/// critic's parameter accumulators, so zero them before the next critic update.
template <class Scalar>
GeneratorLoss<Scalar> generator_loss(Discriminator<Scalar>& d, const FeatureMap<Scalar>& condition,
                                     const FeatureMap<Scalar>& y, const FeatureMap<Scalar>& y_gen,
                                     const FeatureMap<Scalar>& mask, const LossWeights& w,
                                     bool want_grad = false, const ForwardOptions& opt = {true}) {
  const FeatureMap<Scalar> y_tilde = composite_hints(y_gen, y, mask);
  const FeatureMap<Scalar>& recon = w.composite_scope == CompositeScope::Everywhere ? y_tilde : y_gen;
  GeneratorLoss<Scalar> out;
  const int n = y.extent.batch;
  out.adversarial = -d.forward(critic_input(condition, y_tilde), opt).mean_combined();
  out.l1 = l1_loss(y, recon);
  out.mask = mask_loss(y, recon, mask);
  const Scalar l1w = Scalar(w.lambda_l1);
  const Scalar mw = Scalar(w.lambda_mask);
  out.total = out.adversarial + l1w * out.l1 + mw * out.mask;
  if (!want_grad) return out;

  const FeatureMap<Scalar> d_input = d.backward(nn::RowVector<Scalar>::Constant(n, Scalar(-1) / Scalar(n)));
  const int cond = condition.channels();
  FeatureMap<Scalar> d_tilde{d_input.values.bottomRows(d_input.channels() - cond), y.extent};
  FeatureMap<Scalar> d_recon{l1w * l1_loss_grad(y, recon).values + mw * mask_loss_grad(y, recon, mask).values,
                             y.extent};
  if (w.composite_scope == CompositeScope::Everywhere) {
    d_tilde.values += d_recon.values;
    out.grad = composite_hints_backward(std::move(d_tilde), mask);
  } else {
    out.grad = composite_hints_backward(std::move(d_tilde), mask);
    out.grad.values += d_recon.values;
  }
  return out;
}

}  // namespace normgen
