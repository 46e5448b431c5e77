#include "recexplain/evaluation.hpp"

#include "recexplain/util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace recexplain {

namespace {

struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double ss = 0.0;  // sum of squared deviations
};

Moments moments(std::span<const double> xs) {
    Moments m;
    m.n = xs.size();
    if (m.n == 0) return m;
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / static_cast<double>(m.n);
    for (double x : xs) m.ss += (x - m.mean) * (x - m.mean);
    return m;
}

// Continued fraction for I_x(a, b) (modified Lentz); converges for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEpsilon = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEpsilon) return h;
    }
    return h;
}

// I_x(a, b) with y = 1 - x supplied exactly by the caller.
double incomplete_beta(double a, double b, double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

std::string fixed(double v, int precision) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << v;
    return out.str();
}

nlohmann::ordered_json number_or_null(std::optional<double> v) {
    if (!v || !std::isfinite(*v)) return nullptr;
    return *v;
}

nlohmann::ordered_json summary_json(const SampleSummary& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["mean"] = s.n ? nlohmann::ordered_json(s.mean) : nlohmann::ordered_json(nullptr);
    j["sample_sd"] = number_or_null(s.sample_sd);
    j["sem"] = number_or_null(s.sem);
    return j;
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

}  // namespace

void CriterionSet::validate() const {
    if (names.empty()) throw Error(ErrorCode::contract, "criterion set is empty");
    std::set<std::string> seen;
    for (const auto& name : names) {
        if (trim(name).empty()) throw Error(ErrorCode::contract, "criterion names must be nonempty");
        if (!seen.insert(name).second) throw Error(ErrorCode::contract, "duplicate criterion '" + name + "'");
    }
}

bool CriterionSet::contains(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

nlohmann::ordered_json to_json(const RatingRecord& rating) {
    nlohmann::ordered_json j;
    j["explanation_id"] = rating.explanation_id;
    j["rater_id"] = rating.rater_id;
    j["criterion"] = rating.criterion;
    j["score"] = rating.score;
    j["timestamp"] = rating.timestamp;
    j["method"] = rating.method ? nlohmann::ordered_json(to_string(*rating.method)) : nlohmann::ordered_json(nullptr);
    return j;
}

RatingRecord rating_from_json(const nlohmann::json& j) {
    try {
        RatingRecord r;
        r.explanation_id = j.at("explanation_id").get<std::string>();
        r.rater_id = j.at("rater_id").get<std::string>();
        r.criterion = j.at("criterion").get<std::string>();
        const auto& score = j.at("score");
        if (!score.is_number_integer()) throw Error(ErrorCode::contract, "score must be an integer 1-5");
        r.score = score.get<int>();
        r.timestamp = j.value("timestamp", std::string());
        if (j.contains("method") && !j.at("method").is_null()) r.method = parse_method(j.at("method").get<std::string>());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::contract, std::string("malformed rating: ") + e.what());
    }
}

RatingStore::RatingStore(CriterionSet criteria, std::optional<std::filesystem::path> path)
    : criteria_(std::move(criteria)), path_(std::move(path)) {
    criteria_.validate();
    if (!path_ || !std::filesystem::exists(*path_)) return;
    auto lines = read_lines(*path_);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        RatingRecord r;
        try {
            r = rating_from_json(nlohmann::json::parse(lines[i]));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, path_->string() + ":" + std::to_string(i + 1) + ": " + e.what(), "ratings");
        } catch (const Error& e) {
            throw Error(ErrorCode::parse, path_->string() + ":" + std::to_string(i + 1) + ": " + e.what(), "ratings");
        }
        if (r.method) arms_[r.explanation_id] = *r.method;
        ratings_[{r.explanation_id, r.rater_id, r.criterion}] = std::move(r);
    }
}

void RatingStore::register_explanation(const std::string& id, ExplanationMethod method) {
    std::lock_guard lock(mutex_);
    arms_[id] = method;
}

bool RatingStore::knows(const std::string& explanation_id) const {
    std::lock_guard lock(mutex_);
    return arms_.count(explanation_id) != 0;
}

RatingAck RatingStore::record(RatingRecord rating) {
    if (rating.score < 1 || rating.score > 5) {
        throw Error(ErrorCode::contract, "score must be an integer 1-5, got " + std::to_string(rating.score), "ratings");
    }
    if (!criteria_.contains(rating.criterion)) {
        throw Error(ErrorCode::contract, "unknown criterion '" + rating.criterion + "'", "ratings");
    }
    if (trim(rating.rater_id).empty()) throw Error(ErrorCode::contract, "rater_id must be nonempty", "ratings");
    if (rating.timestamp.empty()) rating.timestamp = now_utc();

    std::lock_guard lock(mutex_);
    auto arm = arms_.find(rating.explanation_id);
    if (arm == arms_.end()) {
        throw Error(ErrorCode::lookup, "unknown explanation '" + rating.explanation_id + "'", "ratings");
    }
    rating.method = arm->second;
    if (path_) append_line(*path_, to_json(rating).dump());
    Key key{rating.explanation_id, rating.rater_id, rating.criterion};
    const bool overwritten = ratings_.count(key) != 0;
    ratings_[key] = std::move(rating);
    return {overwritten, ratings_.size()};
}

std::vector<RatingRecord> RatingStore::snapshot() const {
    std::lock_guard lock(mutex_);
    std::vector<RatingRecord> out;
    out.reserve(ratings_.size());
    for (const auto& [key, r] : ratings_) out.push_back(r);
    return out;
}

std::size_t RatingStore::count() const {
    std::lock_guard lock(mutex_);
    return ratings_.size();
}

SampleSummary mean_and_sem(std::span<const double> scores) {
    if (scores.empty()) throw Error(ErrorCode::contract, "cannot summarize an empty sample");
    const auto m = moments(scores);
    SampleSummary s{m.n, m.mean, std::nullopt, std::nullopt};
    if (m.n >= 2) {
        const double sd = std::sqrt(m.ss / static_cast<double>(m.n - 1));
        s.sample_sd = sd;
        s.sem = sd / std::sqrt(static_cast<double>(m.n));
    }
    return s;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::contract, "incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::contract, "incomplete beta needs x in [0, 1]");
    return incomplete_beta(a, b, x, 1.0 - x);
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorCode::contract, "degrees of freedom must be positive");
    if (std::isnan(t)) throw Error(ErrorCode::contract, "t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2));
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::contract, "t-test needs at least two values per group");
    const auto ma = moments(a);
    const auto mb = moments(b);
    const double na = static_cast<double>(ma.n);
    const double nb = static_cast<double>(mb.n);
    const double va = ma.ss / (na - 1.0) / na;  // squared standard error of each mean
    const double vb = mb.ss / (nb - 1.0) / nb;
    const double diff = ma.mean - mb.mean;
    const double se2 = va + vb;
    if (se2 == 0.0) {
        if (diff == 0.0) return {0.0, na + nb - 2.0, 1.0};
        return {std::copysign(std::numeric_limits<double>::infinity(), diff), na + nb - 2.0, 0.0};
    }
    TTestResult r;
    r.t = diff / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p_two_sided = student_t_two_sided_p(r.t, r.df);
    return r;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::contract, "Cohen's d needs at least two values per group");
    const auto ma = moments(a);
    const auto mb = moments(b);
    const double pooled = std::sqrt((ma.ss + mb.ss) / static_cast<double>(ma.n + mb.n - 2));
    if (pooled == 0.0) throw Error(ErrorCode::undefined_effect, "pooled standard deviation is zero");
    return (ma.mean - mb.mean) / pooled;
}

StatsReport build_stats_report(const std::vector<RatingRecord>& ratings, const CriterionSet& criteria) {
    criteria.validate();
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : ratings) {
        if (!r.method) continue;
        auto& [zero_shot, scaffolding] = groups[r.criterion];
        (*r.method == ExplanationMethod::zero_shot ? zero_shot : scaffolding).push_back(r.score);
    }

    StatsReport report;
    for (const auto& name : criteria.names) {
        CriterionStats stats;
        stats.criterion = name;
        const auto& [zero_shot, scaffolding] = groups[name];
        if (!zero_shot.empty()) stats.zero_shot = mean_and_sem(zero_shot);
        if (!scaffolding.empty()) stats.logic_scaffolding = mean_and_sem(scaffolding);
        stats.complete = zero_shot.size() >= 2 && scaffolding.size() >= 2;
        if (!stats.complete) {
            stats.note = "incomplete: needs at least 2 ratings per arm (zero_shot " + std::to_string(zero_shot.size()) +
                         ", logic_scaffolding " + std::to_string(scaffolding.size()) + ")";
            report.criteria.push_back(std::move(stats));
            continue;
        }
        stats.t_test = welch_t_test(scaffolding, zero_shot);
        try {
            stats.cohens_d = cohens_d(scaffolding, zero_shot);
            stats.large_effect = std::abs(*stats.cohens_d) > kLargeEffect;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::undefined_effect) throw;
            stats.note = "effect size undefined: both arms have zero variance";
        }
        report.criteria.push_back(std::move(stats));
    }
    return report;
}

nlohmann::ordered_json to_json(const StatsReport& report) {
    nlohmann::ordered_json j;
    j["large_effect_threshold"] = kLargeEffect;
    j["criteria"] = nlohmann::ordered_json::array();
    for (const auto& c : report.criteria) {
        nlohmann::ordered_json row;
        row["criterion"] = c.criterion;
        row["complete"] = c.complete;
        row["zero_shot"] = summary_json(c.zero_shot);
        row["logic_scaffolding"] = summary_json(c.logic_scaffolding);
        row["t_statistic"] = c.t_test ? number_or_null(c.t_test->t) : nlohmann::ordered_json(nullptr);
        row["degrees_of_freedom"] = c.t_test ? number_or_null(c.t_test->df) : nlohmann::ordered_json(nullptr);
        row["p_value"] = c.t_test ? number_or_null(c.t_test->p_two_sided) : nlohmann::ordered_json(nullptr);
        row["cohens_d"] = number_or_null(c.cohens_d);
        row["large_effect"] = c.large_effect;
        row["note"] = c.note;
        j["criteria"].push_back(std::move(row));
    }
    return j;
}

std::string render_table(const StatsReport& report) {
    auto cell = [](const SampleSummary& s) {
        std::string out = "-";
        if (s.n > 0) {
            out = fixed(s.mean, 2);
            if (s.sem) out += " ± " + fixed(*s.sem, 2);
            out += " (n=" + std::to_string(s.n) + ")";
        }
        const auto glyphs = std::count_if(out.begin(), out.end(), [](char ch) { return (ch & 0xC0) != 0x80; });
        return out + std::string(glyphs < 22 ? 22 - glyphs : 1, ' ');
    };
    std::ostringstream out;
    out << std::left << std::setw(18) << "criterion" << std::setw(22) << "zero_shot" << std::setw(22)
        << "logic_scaffolding" << std::setw(9) << "t" << std::setw(8) << "df" << std::setw(11) << "p" << std::setw(8)
        << "d" << "effect\n";
    for (const auto& c : report.criteria) {
        out << std::setw(18) << c.criterion << cell(c.zero_shot) << cell(c.logic_scaffolding);
        if (!c.complete) {
            out << c.note << "\n";
            continue;
        }
        std::ostringstream p;
        p << std::setprecision(3) << c.t_test->p_two_sided;
        out << std::setw(9) << fixed(c.t_test->t, 3) << std::setw(8) << fixed(c.t_test->df, 1) << std::setw(11)
            << p.str() << std::setw(8) << (c.cohens_d ? fixed(*c.cohens_d, 2) : "n/a")
            << (c.large_effect ? "large" : "") << "\n";
    }
    return out.str();
}

}  // namespace recexplain
