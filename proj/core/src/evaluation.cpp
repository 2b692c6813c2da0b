#include "maglive/evaluation.hpp"

#include "maglive/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <tuple>

namespace maglive::eval {

namespace {

struct ClassCounts {
    std::size_t humans = 0;
    std::size_t attacks = 0;
};

ClassCounts count_classes(const std::vector<ScoredSample>& samples) {
    ClassCounts c;
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw EvaluationError("non-finite score");
        (s.label ? c.humans : c.attacks)++;
    }
    if (c.humans == 0 || c.attacks == 0) throw EvaluationError("evaluation needs both human and attack samples");
    return c;
}

struct Knot {
    double threshold, far, frr;
};

// Error curves at a sentinel below the minimum score and at every distinct score.
std::vector<Knot> error_knots(const std::vector<ScoredSample>& samples) {
    const auto counts = count_classes(samples);
    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(samples.size());
    for (const auto& s : samples) sorted.emplace_back(s.score, s.label);
    std::sort(sorted.begin(), sorted.end());

    const double h = static_cast<double>(counts.humans), a = static_cast<double>(counts.attacks);
    std::vector<Knot> knots{{sorted.front().first - 1.0, 1.0, 0.0}};
    std::size_t rejected_humans = 0, rejected_attacks = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double t = sorted[i].first;
        for (; i < sorted.size() && sorted[i].first == t; ++i) (sorted[i].second ? rejected_humans : rejected_attacks)++;
        knots.push_back({t, (a - static_cast<double>(rejected_attacks)) / a, static_cast<double>(rejected_humans) / h});
    }
    return knots;
}

}  // namespace

ConfusionRates confusion_rates(const std::vector<ScoredSample>& samples, double threshold) {
    const auto counts = count_classes(samples);
    std::size_t accepted_attacks = 0, rejected_humans = 0;
    for (const auto& s : samples) {
        const bool accepted = s.score > threshold;
        if (s.label && !accepted) ++rejected_humans;
        if (!s.label && accepted) ++accepted_attacks;
    }
    ConfusionRates r;
    r.far = static_cast<double>(accepted_attacks) / static_cast<double>(counts.attacks);
    r.frr = static_cast<double>(rejected_humans) / static_cast<double>(counts.humans);
    r.bac = ((1.0 - r.far) + (1.0 - r.frr)) / 2.0;
    return r;
}

EerResult eer(const std::vector<ScoredSample>& samples) {
    const auto knots = error_knots(samples);
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const double dk = knots[k].far - knots[k].frr;
        if (dk == 0.0) return {knots[k].far, knots[k].threshold, knots[k].far, knots[k].frr};
        if (k + 1 < knots.size()) {
            const double dn = knots[k + 1].far - knots[k + 1].frr;
            if (dk > 0.0 && dn < 0.0) {
                const double alpha = dk / (dk - dn);
                EerResult r;
                r.far = knots[k].far + alpha * (knots[k + 1].far - knots[k].far);
                r.frr = knots[k].frr + alpha * (knots[k + 1].frr - knots[k].frr);
                r.eer = 0.5 * (r.far + r.frr);
                r.threshold = knots[k].threshold + alpha * (knots[k + 1].threshold - knots[k].threshold);
                return r;
            }
        }
    }
    // Unreachable: the curve difference starts at +1 and ends at -1.
    throw EvaluationError("no FAR/FRR crossing found");
}

ConfusionRates interpolated_rates(const std::vector<ScoredSample>& samples, double threshold) {
    const auto knots = error_knots(samples);
    ConfusionRates r;
    if (threshold <= knots.front().threshold) {
        r.far = knots.front().far;
        r.frr = knots.front().frr;
    } else if (threshold >= knots.back().threshold) {
        r.far = knots.back().far;
        r.frr = knots.back().frr;
    } else {
        const auto it = std::upper_bound(knots.begin(), knots.end(), threshold,
                                         [](double t, const Knot& k) { return t < k.threshold; });
        const Knot& hi = *it;
        const Knot& lo = *(it - 1);
        const double alpha = (threshold - lo.threshold) / (hi.threshold - lo.threshold);
        r.far = lo.far + alpha * (hi.far - lo.far);
        r.frr = lo.frr + alpha * (hi.frr - lo.frr);
    }
    r.bac = ((1.0 - r.far) + (1.0 - r.frr)) / 2.0;
    return r;
}

RocResult roc_auc(const std::vector<ScoredSample>& samples) {
    const auto knots = error_knots(samples);
    RocResult r;
    for (std::size_t k = 1; k < knots.size(); ++k)
        r.curve.push_back({knots[k].threshold, 1.0 - knots[k].frr, knots[k].far});

    std::vector<double> attacks;
    std::vector<double> humans;
    for (const auto& s : samples) (s.label ? humans : attacks).push_back(s.score);
    std::sort(attacks.begin(), attacks.end());
    // Twice the Mann-Whitney count keeps ties integral.
    std::uint64_t doubled = 0;
    for (double h : humans) {
        const auto lo = std::lower_bound(attacks.begin(), attacks.end(), h);
        const auto hi = std::upper_bound(attacks.begin(), attacks.end(), h);
        doubled += 2 * static_cast<std::uint64_t>(lo - attacks.begin()) + static_cast<std::uint64_t>(hi - lo);
    }
    r.auc = static_cast<double>(doubled) / (2.0 * static_cast<double>(humans.size()) * static_cast<double>(attacks.size()));
    return r;
}

bool command_verdict(const std::vector<double>& word_scores, double threshold) {
    if (word_scores.empty()) throw EvaluationError("command has no word scores");
    return std::all_of(word_scores.begin(), word_scores.end(), [&](double s) { return s > threshold; });
}

std::vector<CommandResult> command_verdicts(const std::vector<ScoredSample>& samples, double threshold) {
    using Key = std::tuple<std::string, std::string, std::string, std::string, int>;
    std::map<Key, std::size_t> index;
    std::vector<CommandResult> results;
    std::vector<std::vector<double>> scores;
    for (const auto& s : samples) {
        const Key key{s.meta.user_id, s.meta.device_id, s.meta.content_id, s.meta.command_id, s.label};
        auto [it, inserted] = index.emplace(key, results.size());
        if (inserted) {
            results.push_back({s.meta.command_id, s.label, false, 0});
            scores.emplace_back();
        }
        scores[it->second].push_back(s.score);
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        results[i].words = scores[i].size();
        results[i].accepted = command_verdict(scores[i], threshold);
    }
    return results;
}

GroupTable group_breakdown(const std::vector<ScoredSample>& samples, GroupKey key, double threshold) {
    std::map<std::string, std::vector<ScoredSample>> groups;
    for (const auto& s : samples) {
        const std::string& g = key == GroupKey::user     ? s.meta.user_id
                               : key == GroupKey::device ? s.meta.device_id
                                                         : s.meta.content_id;
        groups[g].push_back(s);
    }
    GroupTable table;
    std::size_t valid = 0;
    for (const auto& [name, members] : groups) {
        GroupRow row{name, false, members.size(), 0.0, 0.0};
        const bool has_h = std::any_of(members.begin(), members.end(), [](const auto& s) { return s.label == 1; });
        const bool has_a = std::any_of(members.begin(), members.end(), [](const auto& s) { return s.label == 0; });
        if (!has_h || !has_a) {
            row.degenerate = true;
        } else {
            row.bac = confusion_rates(members, threshold).bac;
            row.eer = eer(members).eer;
            table.macro_bac += row.bac;
            table.macro_eer += row.eer;
            ++valid;
        }
        table.rows.push_back(row);
    }
    if (valid) {
        table.macro_bac /= static_cast<double>(valid);
        table.macro_eer /= static_cast<double>(valid);
    }
    return table;
}

PcaResult pca_project(const std::vector<std::vector<double>>& features, std::uint64_t seed) {
    if (features.size() < 3) throw EvaluationError("PCA needs at least 3 vectors");
    const std::size_t n = features.size(), d = features.front().size();
    for (const auto& f : features)
        if (f.size() != d) throw ShapeError("PCA input vectors differ in length");

    std::vector<double> mean(d, 0.0);
    for (const auto& f : features)
        for (std::size_t j = 0; j < d; ++j) mean[j] += f[j] / static_cast<double>(n);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            x[i][j] = features[i][j] - mean[j];
            total += x[i][j] * x[i][j];
        }

    PcaResult result;
    result.points.assign(n, {0.0, 0.0});
    if (total <= 1e-24) {
        result.degenerate = true;
        return result;
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const std::vector<std::vector<double>> centred = x;
    for (std::size_t comp = 0; comp < 2; ++comp) {
        std::vector<double> v(d);
        for (double& c : v) c = uni(rng);
        std::vector<double> xv(n);
        bool null_direction = false;
        for (int iter = 0; iter < 1000; ++iter) {
            for (std::size_t i = 0; i < n; ++i) {
                xv[i] = 0.0;
                for (std::size_t j = 0; j < d; ++j) xv[i] += x[i][j] * v[j];
            }
            std::vector<double> next(d, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) next[j] += x[i][j] * xv[i];
            double norm = 0.0;
            for (double c : next) norm += c * c;
            norm = std::sqrt(norm);
            if (norm <= 1e-300) {
                null_direction = true;
                break;
            }
            double change = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                next[j] /= norm;
                change += (next[j] - v[j]) * (next[j] - v[j]);
            }
            v = std::move(next);
            if (std::sqrt(change) < 1e-9) break;
        }
        if (null_direction) break;  // remaining variance is zero; coordinates stay 0
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) proj += centred[i][j] * v[j];
            result.points[i][comp] = proj;
            double resid = 0.0;
            for (std::size_t j = 0; j < d; ++j) resid += x[i][j] * v[j];
            for (std::size_t j = 0; j < d; ++j) x[i][j] -= resid * v[j];
        }
    }
    return result;
}

EvalReport evaluate(const std::vector<ScoredSample>& samples, double threshold) {
    EvalReport report;
    report.threshold = threshold;
    report.at_threshold = confusion_rates(samples, threshold);
    report.eer = eer(samples);
    report.at_eer = interpolated_rates(samples, report.eer.threshold);
    report.roc = roc_auc(samples);
    report.groups["user"] = group_breakdown(samples, GroupKey::user, threshold);
    report.groups["device"] = group_breakdown(samples, GroupKey::device, threshold);
    report.groups["content"] = group_breakdown(samples, GroupKey::content, threshold);
    report.commands = command_verdicts(samples, threshold);

    std::size_t h = 0, a = 0, rejected_h = 0, accepted_a = 0;
    for (const auto& c : report.commands) {
        if (c.label) {
            ++h;
            if (!c.accepted) ++rejected_h;
        } else {
            ++a;
            if (c.accepted) ++accepted_a;
        }
    }
    if (h) report.command_rates.frr = static_cast<double>(rejected_h) / static_cast<double>(h);
    if (a) report.command_rates.far = static_cast<double>(accepted_a) / static_cast<double>(a);
    report.command_rates.bac = ((1.0 - report.command_rates.far) + (1.0 - report.command_rates.frr)) / 2.0;
    return report;
}

namespace {

nlohmann::json rates_json(const ConfusionRates& r) { return {{"bac", r.bac}, {"far", r.far}, {"frr", r.frr}}; }

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ResolutionError("cannot write " + path.string());
    out << header << '\n';
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json j;
    j["threshold"] = report.threshold;
    j["at_threshold"] = rates_json(report.at_threshold);
    j["eer"] = {{"eer", report.eer.eer}, {"threshold", report.eer.threshold}, {"far", report.eer.far},
                {"frr", report.eer.frr}};
    j["at_eer"] = rates_json(report.at_eer);
    j["auc"] = report.roc.auc;
    j["roc_points"] = report.roc.curve.size();
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [key, table] : report.groups) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : table.rows) {
            nlohmann::json row{{"group", r.group}, {"samples", r.samples}, {"degenerate", r.degenerate}};
            if (!r.degenerate) row["bac"] = r.bac, row["eer"] = r.eer;
            rows.push_back(std::move(row));
        }
        groups[key] = {{"rows", rows}, {"macro_bac", table.macro_bac}, {"macro_eer", table.macro_eer}};
    }
    j["groups"] = groups;
    nlohmann::json commands = nlohmann::json::array();
    for (const auto& c : report.commands)
        commands.push_back({{"command", c.command_id}, {"label", c.label}, {"accepted", c.accepted}, {"words", c.words}});
    j["commands"] = commands;
    j["command_rates"] = rates_json(report.command_rates);
    return j;
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
    auto out = open_csv(path, "threshold,tar,far");
    for (const auto& p : roc.curve) out << num(p.threshold) << ',' << num(p.tar) << ',' << num(p.far) << '\n';
}

void write_pca_csv(const std::filesystem::path& path, const PcaResult& pca, const std::vector<int>& labels) {
    if (labels.size() != pca.points.size()) throw UsageError("pca export: one label per point required");
    auto out = open_csv(path, "x,y,label");
    for (std::size_t i = 0; i < labels.size(); ++i)
        out << num(pca.points[i][0]) << ',' << num(pca.points[i][1]) << ',' << (labels[i] ? "human" : "loudspeaker")
            << '\n';
}

}  // namespace maglive::eval
