#pragma once

#include <vector>

namespace csav::edl {

// Dirichlet over C classes built from non-negative evidence: alpha = evidence + 1.
class DirichletPrediction {
public:
    DirichletPrediction() = default;
    // Throws DimensionError if empty, Error if any alpha is not finite and positive.
    explicit DirichletPrediction(std::vector<double> alpha);

    const std::vector<double>& alpha() const { return alpha_; }
    int classes() const { return static_cast<int>(alpha_.size()); }
    double strength() const { return strength_; }
    double p(int c) const { return alpha_[c] / strength_; }
    std::vector<double> probabilities() const;
    int argmax() const;

private:
    std::vector<double> alpha_;
    double strength_ = 0.0;
};

struct Uncertainty {
    double alea = 0.0; // -max_c p_c, in [-1, -1/C]
    double epis = 0.0; // C / S, in (0, 1]
};

// alpha = ReLU(raw) + 1. Throws Error on non-finite input.
DirichletPrediction dirichlet_from_raw(const std::vector<double>& raw);
Uncertainty uncertainties(const DirichletPrediction& d);

// KL(Dir(alpha) || Dir(1, ..., 1)). Throws Error unless every alpha > 0.
double kl_to_uniform(const std::vector<double>& alpha);
// d KL / d alpha_k.
std::vector<double> kl_to_uniform_gradient(const std::vector<double>& alpha);

} // namespace csav::edl
