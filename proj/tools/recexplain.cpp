#include <csignal>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "recexplain/config.hpp"
#include "recexplain/error.hpp"
#include "recexplain/evaluation.hpp"
#include "recexplain/service.hpp"
#include "recexplain/util.hpp"
#include "recexplain/workspace.hpp"

using namespace recexplain;
using ojson = nlohmann::ordered_json;

namespace {

struct ConfigFlags {
    std::optional<std::string> file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    std::map<std::string, std::string> given() const {
        std::map<std::string, std::string> out;
        for (const auto& [name, option] : options) {
            if (option->count() > 0) out[name] = values.at(name);
        }
        return out;
    }
};

void add_config_flags(CLI::App& app, ConfigFlags& flags) {
    app.add_option("--config", flags.file, "JSON config file");
    const auto defaults = to_json(AppConfig{}, false);
    for (const auto& name : config_field_names()) {
        std::string dashed = name;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        std::string names = "--" + name;
        if (dashed != name) names += ",--" + dashed;
        const auto& d = defaults.at(name);
        const std::string shown = d.is_string() ? d.get<std::string>() : d.dump();
        flags.options[name] = app.add_option(names, flags.values[name], "default: " + (shown.empty() ? "\"\"" : shown));
    }
}

AppConfig resolve(const ConfigFlags& flags) {
    std::optional<std::filesystem::path> file;
    if (flags.file) file = *flags.file;
    return resolve_config(file, config_from_environment(), flags.given());
}

void emit(const ojson& j) { std::cout << j.dump() << "\n"; }

ojson row_reports(const std::vector<RowReport>& rows) {
    ojson out = ojson::array();
    for (const auto& r : rows) out.push_back({{"line", r.line}, {"reason", r.reason}});
    return out;
}

int fail(const Error& e) {
    ojson j;
    j["error"] = error_body(e);
    std::cerr << j.dump() << "\n";
    return 1;
}

int serve(const AppConfig& config) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Runtime runtime(config);
    Service service(runtime);
    const auto address = parse_listen(config.listen);
    const int port = service.bind(address.host, address.port);
    ojson banner;
    banner["listening"] = address.host + ":" + std::to_string(port);
    banner["config"] = to_json(config);
    std::cerr << banner.dump() << std::endl;

    std::thread([&service, signals] {
        int received = 0;
        sigwait(&signals, &received);
        service.stop();
    }).detach();
    service.run();
    std::cerr << R"({"stopped":true})" << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized recommendation explanations: ingest, embed, extract aspects, explain, evaluate, serve"};
    app.require_subcommand(1);
    ConfigFlags flags;
    add_config_flags(app, flags);

    auto* show = app.add_subcommand("config", "Print the resolved configuration (secrets redacted)");

    auto* ingest = app.add_subcommand("ingest", "Load a catalog (and histories) into the data directory");
    std::string catalog_path, format_name = "jsonl";
    std::optional<std::string> metadata_path, history_path;
    ingest->add_option("--catalog", catalog_path, "Catalog file")->required();
    ingest->add_option("--format", format_name, "jsonl | movielens")->capture_default_str();
    ingest->add_option("--metadata", metadata_path, "JSONL metadata to merge by id");
    ingest->add_option("--history", history_path, "Interactions file: user::item[::rating[::timestamp]]");

    auto* embed = app.add_subcommand("embed", "Build the embedding index (skipped when up to date)");
    bool force = false;
    embed->add_flag("--force", force, "Rebuild even when up to date");

    auto* aspects = app.add_subcommand("aspects", "Extract aspects for catalog items, using the cache");
    std::vector<std::string> aspect_items;
    aspects->add_option("--item", aspect_items, "Item ids (default: the whole catalog)");

    auto* explain = app.add_subcommand("explain", "Generate explanations and append them to the explanation log");
    std::string item_id, user_id, method_name = "both";
    std::optional<std::string> requests_path;
    explain->add_option("--item", item_id, "Recommended item id");
    explain->add_option("--user", user_id, "User id");
    explain->add_option("--method", method_name, "zero_shot | logic_scaffolding | both")->capture_default_str();
    explain->add_option("--requests", requests_path, "JSONL of {recommended_id, user_id, method}");

    auto* stats = app.add_subcommand("stats", "Summarize a ratings log per criterion");
    std::optional<std::string> ratings_path, report_path;
    bool as_json = false;
    std::vector<std::string> criteria;
    stats->add_option("--ratings", ratings_path, "Ratings log (default: <data_dir>/ratings.jsonl)");
    stats->add_option("--report", report_path, "Also write the JSON report to this path");
    stats->add_option("--criteria", criteria, "Criterion names (default: the four standard ones)");
    stats->add_flag("--json", as_json, "Print JSON instead of the table");

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");

    CLI11_PARSE(app, argc, argv);

    try {
        const AppConfig config = resolve(flags);
        const WorkspacePaths paths{config.data_dir};

        if (*show) {
            std::cout << to_json(config).dump(2) << "\n";
        } else if (*ingest) {
            IngestOptions options{catalog_path, parse_catalog_format(format_name), std::nullopt, std::nullopt};
            if (metadata_path) options.metadata = *metadata_path;
            if (history_path) options.history = *history_path;
            const auto summary = ingest_workspace(paths, options);
            ojson j;
            j["command"] = "ingest";
            j["catalog"] = paths.catalog().string();
            j["items"] = summary.items;
            j["rows_read"] = summary.rows_read;
            j["skipped"] = row_reports(summary.skipped);
            j["metadata_ignored"] = summary.metadata_ignored;
            j["metadata_rejected"] = row_reports(summary.metadata_rejected);
            j["users"] = summary.users;
            emit(j);
        } else if (*embed) {
            auto provider = make_embedding_provider(config);
            const auto summary = embed_workspace(paths, *provider, force);
            ojson j;
            j["command"] = "embed";
            j["status"] = summary.up_to_date ? "up-to-date" : "built";
            j["items"] = summary.items;
            j["model_id"] = summary.model_id;
            j["fingerprint"] = summary.fingerprint;
            emit(j);
        } else if (*aspects) {
            Runtime runtime(config);
            const auto summary = runtime.extract_all(aspect_items);
            ojson j;
            j["command"] = "aspects";
            j["items"] = summary.items;
            j["cached"] = summary.cached;
            j["extracted"] = summary.extracted;
            j["gateway_calls"] = runtime.gateway().calls();
            j["failed"] = ojson::array();
            for (const auto& f : summary.failed) {
                j["failed"].push_back({{"item_id", f.item_id}, {"code", f.code}, {"message", f.message}});
            }
            emit(j);
            if (!summary.failed.empty()) return 1;
        } else if (*explain) {
            struct Job {
                std::string item, user, method;
            };
            std::vector<Job> jobs;
            if (requests_path) {
                for (const auto& line : read_lines(*requests_path)) {
                    if (trim(line).empty()) continue;
                    const auto r = nlohmann::json::parse(line);
                    jobs.push_back({r.at("recommended_id").get<std::string>(), r.at("user_id").get<std::string>(),
                                    r.value("method", std::string("both"))});
                }
            } else {
                if (item_id.empty() || user_id.empty()) {
                    throw Error(ErrorCode::contract, "explain needs --item and --user, or --requests", "request");
                }
                jobs.push_back({item_id, user_id, method_name});
            }
            Runtime runtime(config);
            for (const auto& job : jobs) {
                std::vector<ExplanationMethod> methods;
                if (job.method == "both") methods = {ExplanationMethod::logic_scaffolding, ExplanationMethod::zero_shot};
                else methods = {parse_method(job.method)};
                for (auto method : methods) emit(to_json(runtime.explain(job.item, job.user, method)));
            }
        } else if (*stats) {
            CriterionSet set;
            if (!criteria.empty()) set.names = criteria;
            const std::filesystem::path log = ratings_path ? std::filesystem::path(*ratings_path) : paths.ratings();
            if (!std::filesystem::exists(log)) throw Error(ErrorCode::io, "no ratings log at " + log.string(), "stats");
            const RatingStore store(set, log);
            const auto report = build_stats_report(store.snapshot(), set);
            if (report_path) write_file_atomic(*report_path, to_json(report).dump(2) + "\n");
            if (as_json) std::cout << to_json(report).dump(2) << "\n";
            else std::cout << render_table(report);
        } else if (*serve_cmd) {
            return serve(config);
        }
    } catch (const Error& e) {
        return fail(e);
    } catch (const nlohmann::json::exception& e) {
        return fail(Error(ErrorCode::parse, e.what()));
    } catch (const std::exception& e) {
        return fail(Error(ErrorCode::io, e.what()));
    }
    return 0;
}
