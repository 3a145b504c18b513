#ifndef FDF_ENGINE_HPP
#define FDF_ENGINE_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdf/data_io.hpp"
#include "fdf/equilibrium.hpp"
#include "fdf/kernel_geometry.hpp"
#include "fdf/nn_core.hpp"

namespace fdf {

enum class FilterProvenance { generated_spiral, handcrafted_file, bilevel };

// Where the per-level filter shapes come from.
struct FilterSource {
    FilterProvenance provenance = FilterProvenance::generated_spiral;
    SpiralParams spiral;
    std::string handcrafted_path;

    static FilterSource generated(const SpiralParams& params = {});
    static FilterSource handcrafted(const std::string& path);

    FilterSpec filter_for(const EquilibriumLevel& level) const;
};

// Nine trained parameter snapshots, one per equilibrium level, sharing an
// architecture. Entry 8 always uses the normal contiguous filter.
struct ModelBank {
    int arch_id = 1;
    FilterProvenance provenance = FilterProvenance::generated_spiral;
    std::map<int, Network<float>> entries;

    const Network<float>& entry(int level_index) const;
    void validate() const;
};

struct BankTrainOptions {
    TrainConfig train;
    std::vector<int> levels = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    bool warm_start = false;            // reuse previous level's dense weights
    std::map<int, int> stride_schedule; // level -> conv stride, default 1
    int hidden_units = 1024;
    int input_h = 32;
    int input_w = 32;
    int input_c = 3;
};

struct BankTrainResult {
    ModelBank bank;
    std::map<int, std::vector<double>> loss_history;  // level -> per-epoch loss
};

BankTrainResult train_bank(const Dataset& train_split, int arch_id,
                           const FilterSource& filters, const BankTrainOptions& options);

// One FDF cascade over an instance: levels visited in order 0, 1, ... until
// the stopping rule fires or level 8 (the normal filter) has been evaluated.
struct FdfTrace {
    struct Step {
        int level_index;
        int label;
        double metric;
    };
    std::vector<Step> steps;
    bool stopped_early = false;

    int first_label() const { return steps.front().label; }
    int final_label() const { return steps.back().label; }
};

std::pair<int, FdfTrace> fdf_predict(const Tensor<float>& input, const ModelBank& bank,
                                     const EquilibriumMetric& metric);

// The paper's four criteria over a dataset at one threshold.
struct CriteriaReport {
    double c1 = 0;  // % final FDF predictions correct
    double c2 = 0;  // % final FDF predictions agreeing with the normal-filter model
    double c3 = 0;  // % traces whose first and last predictions match
    double c4 = 1;  // mean trace length, in [1, 9]
    double threshold = 0;
    MetricKind kind = MetricKind::variance;
};

// Pure aggregation from per-instance outcomes; exposed for direct testing.
CriteriaReport aggregate_criteria(const std::vector<FdfTrace>& traces,
                                  const std::vector<int>& truth,
                                  const std::vector<int>& baseline_labels,
                                  const EquilibriumMetric& metric);

CriteriaReport evaluate_criteria(const Dataset& test_split, const ModelBank& bank,
                                 const EquilibriumMetric& metric,
                                 const Network<float>& baseline, int workers = 1);

// Bi-level filter-order design: walk the order schedule from the most
// scattered level, train the follower with sum-squared-error loss, accept
// the first order whose mean equilibrium over the validation split exceeds c.
struct BilevelConfig {
    double c = 0.0;
    std::vector<int> order_schedule = {0, 1, 2, 3, 4, 5, 6, 7, 8};  // most scattered first
    TrainConfig follower;
    FilterSource filters;
    int hidden_units = 1024;

    void validate() const;
};

struct BilevelResult {
    int level_index = -1;
    Network<float> net;
    bool satisfied = false;
    double mean_equilibrium = 0;
    std::vector<std::pair<int, double>> tried;  // (level, mean equilibrium) in order
};

BilevelResult bilevel_design(const Dataset& train_split, const Dataset& validation_split,
                             const BilevelConfig& config, MetricKind kind);

// Experiment descriptor: architecture, metric kind, threshold sweep, filter
// source, training options, and the baseline policy for Criterion 2.
struct ExperimentSpec {
    int arch_id = 1;
    MetricKind metric = MetricKind::variance;
    std::vector<double> thresholds;
    FilterSource filters;
    BankTrainOptions bank_options;
    bool baseline_is_bank_entry8 = true;
    std::string baseline_checkpoint;  // used when baseline_is_bank_entry8 is false
    int workers = 1;
};

struct ExperimentResult {
    std::vector<CriteriaReport> rows;  // one per threshold
    double baseline_accuracy = 0;      // % correct of the baseline network
};

// Runs the criteria sweep with a caller-provided bank (pass nullptr to train
// one from the splits per the descriptor).
ExperimentResult run_experiment(const ExperimentSpec& spec, const DataSplits& splits,
                                const ModelBank* bank = nullptr);

double test_accuracy(const Network<float>& net, const Dataset& data, int workers = 1);

// Report rendering: CSV with header threshold,c1,c2,c3,c4 and a text table
// mirroring the paper's criterion-per-row layout.
std::string criteria_csv(const std::vector<CriteriaReport>& rows);
std::string criteria_table(const std::vector<CriteriaReport>& rows);

// Bank checkpoint directory layout: <dir>/level_<k>.ckpt for k in 0..8.
void save_bank(const ModelBank& bank, const std::string& dir);
ModelBank load_bank(const std::string& dir, int expected_arch_id);

const char* metric_kind_name(MetricKind kind);
MetricKind metric_kind_from_name(const std::string& name);

}  // namespace fdf

#endif
