#pragma once

#include <span>
#include <vector>

#include "nametune/classify.hpp"
#include "nametune/train.hpp"

namespace nametune {

// count points spaced log-uniformly over [lo, hi], endpoints included.
std::vector<double> geometric_grid(double lo, double hi, int count);

struct LinearProbeModel {
    Matrix weight;  // N x d_embed
    Vector bias;    // N
    double lambda = 0.0;
};

// Multinomial logistic regression: cross-entropy + lambda/2 * ||W||^2
// (bias unpenalized), minimized by L-BFGS (history 10, strong Wolfe)
// from a zero start, capped at 1000 iterations, ||grad|| tolerance 1e-6.
LinearProbeModel linear_probe_fit(std::span<const LabeledEmbedding> examples, int n_classes,
                                  double lambda);

double linear_probe_objective(const LinearProbeModel& model,
                              std::span<const LabeledEmbedding> examples);

int linear_probe_predict(const LinearProbeModel& model, const Vector& x);

struct VLPrototypeModel {
    Matrix prototypes;  // N x d_embed, unit rows
    double text_weight = 1.0;
    EmbeddingSpace space;
};

// prototype_i = normalize(w_t * normalize(text_i) + mean_j normalize(visual_ij)).
// The w_t -> inf limit reproduces zero-shot predictions; the w_t -> 0
// limit reproduces nearest-mean-of-support predictions.
VLPrototypeModel vl_prototype_build(const ClassifierHead& head,
                                    const std::vector<std::vector<Vector>>& support_per_class,
                                    double text_weight);

int vl_prototype_predict(const VLPrototypeModel& model, const Vector& x);

}  // namespace nametune
