#ifndef FDF_EQUILIBRIUM_HPP
#define FDF_EQUILIBRIUM_HPP

#include <span>

namespace fdf {

enum class MetricKind { variance, entropy };

// Stopping rule of the FDF loop. High output variance and low output
// entropy both mean a confident prediction, so the variance kind stops on
// metric >= threshold and the entropy kind stops on metric <= threshold.
struct EquilibriumMetric {
    MetricKind kind = MetricKind::variance;
    double threshold = 0.05;

    void validate() const;
};

// Population variance of the class distribution, (1/K) * sum (p_i - 1/K)^2.
// For 10 classes this lives in [0, 0.09]: 0 iff uniform, 0.09 iff one-hot.
double output_variance(std::span<const double> probs);

// Shannon entropy in nats, -sum p_i ln p_i with 0 ln 0 := 0.
// In [0, ln K]: 0 iff one-hot, ln K iff uniform.
double output_entropy(std::span<const double> probs);

bool should_stop(const EquilibriumMetric& metric, std::span<const double> probs);

// The raw metric value the stopping rule looks at.
double metric_value(MetricKind kind, std::span<const double> probs);

// Scalar equilibrium for the bi-level constraint: larger always means more
// confident (variance as-is, ln K minus entropy for the entropy kind).
double equilibrium_value(MetricKind kind, std::span<const double> probs);

}  // namespace fdf

#endif
