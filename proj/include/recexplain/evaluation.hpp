#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "recexplain/explanation.hpp"

namespace recexplain {

// Cohen's conventional threshold for a "large" standardized effect.
inline constexpr double kLargeEffect = 0.8;

struct CriterionSet {
    std::vector<std::string> names = {"factuality", "personalization", "readability", "proper_utterance"};

    // Throws Error{contract} if empty or if names repeat.
    void validate() const;
    bool contains(const std::string& name) const;
};

struct RatingRecord {
    std::string explanation_id;
    std::string rater_id;
    std::string criterion;
    int score = 0;
    std::string timestamp;
    // Arm of the rated explanation, resolved by the store; never supplied by raters.
    std::optional<ExplanationMethod> method;
};

nlohmann::ordered_json to_json(const RatingRecord& rating);
RatingRecord rating_from_json(const nlohmann::json& j);

struct RatingAck {
    bool overwritten = false;
    std::size_t count = 0;
};

// Append-only ratings log with last-write-wins compaction on
// (explanation_id, rater_id, criterion). Writes are serialized.
class RatingStore {
public:
    // With a path, replays an existing log first; its arms are registered
    // from the recorded method of each line.
    explicit RatingStore(CriterionSet criteria = {}, std::optional<std::filesystem::path> path = std::nullopt);

    void register_explanation(const std::string& id, ExplanationMethod method);
    bool knows(const std::string& explanation_id) const;

    // Throws Error{contract} for scores outside 1-5 or unknown criteria, and
    // Error{lookup} for unregistered explanations.
    RatingAck record(RatingRecord rating);

    std::vector<RatingRecord> snapshot() const;
    std::size_t count() const;
    const CriterionSet& criteria() const { return criteria_; }

private:
    using Key = std::tuple<std::string, std::string, std::string>;
    CriterionSet criteria_;
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mutex_;
    std::map<std::string, ExplanationMethod> arms_;
    std::map<Key, RatingRecord> ratings_;
};

struct SampleSummary {
    std::size_t n = 0;
    double mean = 0.0;
    std::optional<double> sample_sd;  // n >= 2
    std::optional<double> sem;        // n >= 2
};

// Throws Error{contract} for an empty sample.
SampleSummary mean_and_sem(std::span<const double> scores);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
};

// Welch's unequal-variance t-test of mean(a) - mean(b). Needs two values per
// group. Both groups constant: t = 0, p = 1 when the means agree, otherwise
// t = ±inf, p = 0; df falls back to na + nb - 2 in either case.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// (mean(a) - mean(b)) / pooled sd. Throws Error{undefined_effect} when the
// pooled sd is zero.
double cohens_d(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct CriterionStats {
    std::string criterion;
    SampleSummary zero_shot;
    SampleSummary logic_scaffolding;
    bool complete = false;
    std::optional<TTestResult> t_test;
    std::optional<double> cohens_d;  // logic_scaffolding minus zero_shot
    bool large_effect = false;
    std::string note;
};

struct StatsReport {
    std::vector<CriterionStats> criteria;
};

// One entry per configured criterion. Criteria lacking two ratings in either
// arm are marked incomplete; the rest are still reported.
StatsReport build_stats_report(const std::vector<RatingRecord>& ratings, const CriterionSet& criteria);

nlohmann::ordered_json to_json(const StatsReport& report);
std::string render_table(const StatsReport& report);

}  // namespace recexplain
