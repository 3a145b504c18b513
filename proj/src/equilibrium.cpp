#include "fdf/equilibrium.hpp"

#include <cmath>

#include "fdf/errors.hpp"

namespace fdf {

void EquilibriumMetric::validate() const {
    if (threshold < 0.0) throw ConfigError("equilibrium threshold must be >= 0");
}

double output_variance(std::span<const double> probs) {
    const double mean = 1.0 / static_cast<double>(probs.size());
    double acc = 0.0;
    for (double p : probs) {
        const double d = p - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(probs.size());
}

double output_entropy(std::span<const double> probs) {
    double acc = 0.0;
    for (double p : probs)
        if (p > 0.0) acc -= p * std::log(p);
    return acc;
}

double metric_value(MetricKind kind, std::span<const double> probs) {
    return kind == MetricKind::variance ? output_variance(probs) : output_entropy(probs);
}

bool should_stop(const EquilibriumMetric& metric, std::span<const double> probs) {
    if (metric.kind == MetricKind::variance)
        return output_variance(probs) >= metric.threshold;
    return output_entropy(probs) <= metric.threshold;
}

double equilibrium_value(MetricKind kind, std::span<const double> probs) {
    if (kind == MetricKind::variance) return output_variance(probs);
    return std::log(static_cast<double>(probs.size())) - output_entropy(probs);
}

}  // namespace fdf
