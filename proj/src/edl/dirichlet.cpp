#include "csav/edl/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "csav/error.hpp"

namespace csav::edl {

namespace {

void check_alpha(const std::vector<double>& alpha) {
    if (alpha.empty()) throw DimensionError("Dirichlet needs at least one class");
    for (double a : alpha)
        if (!std::isfinite(a) || a <= 0.0) throw Error("Dirichlet concentration must be finite and positive");
}

} // namespace

DirichletPrediction::DirichletPrediction(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    check_alpha(alpha_);
    strength_ = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
}

std::vector<double> DirichletPrediction::probabilities() const {
    std::vector<double> p(alpha_.size());
    for (std::size_t c = 0; c < alpha_.size(); ++c) p[c] = alpha_[c] / strength_;
    return p;
}

int DirichletPrediction::argmax() const {
    return static_cast<int>(std::max_element(alpha_.begin(), alpha_.end()) - alpha_.begin());
}

DirichletPrediction dirichlet_from_raw(const std::vector<double>& raw) {
    std::vector<double> alpha(raw.size());
    for (std::size_t c = 0; c < raw.size(); ++c) {
        if (!std::isfinite(raw[c])) throw Error("non-finite classifier output");
        alpha[c] = std::max(raw[c], 0.0) + 1.0;
    }
    return DirichletPrediction(std::move(alpha));
}

Uncertainty uncertainties(const DirichletPrediction& d) {
    const auto& a = d.alpha();
    const double top = *std::max_element(a.begin(), a.end());
    return {-top / d.strength(), d.classes() / d.strength()};
}

double kl_to_uniform(const std::vector<double>& alpha) {
    check_alpha(alpha);
    const double c = static_cast<double>(alpha.size());
    const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    const double psi_s = boost::math::digamma(s);
    double kl = std::lgamma(s) - std::lgamma(c);
    for (double a : alpha) kl += -std::lgamma(a) + (a - 1.0) * (boost::math::digamma(a) - psi_s);
    return std::max(kl, 0.0);
}

std::vector<double> kl_to_uniform_gradient(const std::vector<double>& alpha) {
    check_alpha(alpha);
    const double s = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double excess = 0.0;
    for (double a : alpha) excess += a - 1.0;
    const double tri_s = boost::math::trigamma(s);
    std::vector<double> g(alpha.size());
    for (std::size_t k = 0; k < alpha.size(); ++k)
        g[k] = (alpha[k] - 1.0) * boost::math::trigamma(alpha[k]) - tri_s * excess;
    return g;
}

} // namespace csav::edl
