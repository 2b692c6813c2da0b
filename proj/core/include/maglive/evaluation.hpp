#pragma once

#include "maglive/trace.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace maglive::eval {

// score = probability of human; label 1 = human, 0 = loudspeaker.
struct ScoredSample {
    double score = 0.0;
    int label = 0;
    RecordingMeta meta;
};

struct ConfusionRates {
    double bac = 0.0;
    double far = 0.0;
    double frr = 0.0;
};

// A sample is accepted iff score > threshold.
ConfusionRates confusion_rates(const std::vector<ScoredSample>& samples, double threshold);

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
    // Both error curves interpolated to the crossing; equal up to rounding.
    double far = 0.0;
    double frr = 0.0;
};

// Sweep thresholds at every distinct score (plus one below the minimum) and
// interpolate the FAR and FRR curves linearly to where they cross.
EerResult eer(const std::vector<ScoredSample>& samples);

// FAR/FRR at an arbitrary threshold using the same piecewise-linear curves
// the EER is read from.
ConfusionRates interpolated_rates(const std::vector<ScoredSample>& samples, double threshold);

struct RocPoint {
    double threshold = 0.0;
    double tar = 0.0;
    double far = 0.0;
};

struct RocResult {
    std::vector<RocPoint> curve;  // ascending threshold
    double auc = 0.0;
};

// AUC is P(human score > attack score) with ties counted one half.
RocResult roc_auc(const std::vector<ScoredSample>& samples);

// Command accepted as human iff every word score clears the threshold.
bool command_verdict(const std::vector<double>& word_scores, double threshold);

struct CommandResult {
    std::string command_id;
    int label = 0;
    bool accepted = false;
    std::size_t words = 0;
};

// Groups samples by (user, device, content, command, label) preserving first appearance order.
std::vector<CommandResult> command_verdicts(const std::vector<ScoredSample>& samples, double threshold);

enum class GroupKey { user, device, content };

struct GroupRow {
    std::string group;
    bool degenerate = false;  // a class is missing; rates are not reported
    std::size_t samples = 0;
    double bac = 0.0;
    double eer = 0.0;
};

struct GroupTable {
    std::vector<GroupRow> rows;
    double macro_bac = 0.0;
    double macro_eer = 0.0;
};

GroupTable group_breakdown(const std::vector<ScoredSample>& samples, GroupKey key, double threshold);

struct PcaResult {
    std::vector<std::array<double, 2>> points;
    bool degenerate = false;
};

// Mean-centred projection on the top two principal directions by power
// iteration with deflation.
PcaResult pca_project(const std::vector<std::vector<double>>& features, std::uint64_t seed = 0);

struct EvalReport {
    double threshold = 0.5;
    ConfusionRates at_threshold;
    EerResult eer;
    ConfusionRates at_eer;  // interpolated curves at the EER threshold
    RocResult roc;
    std::map<std::string, GroupTable> groups;
    std::vector<CommandResult> commands;
    ConfusionRates command_rates;  // command-level FAR/FRR/BAC
};

EvalReport evaluate(const std::vector<ScoredSample>& samples, double threshold = 0.5);

// Stable key order and full double precision, so equal reports dump to equal bytes.
nlohmann::json to_json(const EvalReport& report);

// `threshold,tar,far`, one ROC point per row.
void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);
// `x,y,label`, one projected feature vector per row.
void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca, const std::vector<int>& labels);

}  // namespace maglive::eval
