#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "recexplain/aspects.hpp"
#include "recexplain/catalog.hpp"
#include "recexplain/config.hpp"
#include "recexplain/embedding.hpp"
#include "recexplain/evaluation.hpp"
#include "recexplain/explanation.hpp"
#include "recexplain/workspace.hpp"

namespace py = pybind11;
using namespace recexplain;

namespace {

AppConfig config_from(const std::map<std::string, std::string>& settings) {
    AppConfig config;
    apply_overrides(config, settings, "settings");
    config.validate();
    return config;
}

Item titled(const std::string& id, const std::string& title) {
    Item item;
    item.id = id;
    item.title = title;
    return item;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core: selection, aspect parsing, validation, statistics and the offline pipeline";

    static py::exception<Error> error_type(m, "RecexplainError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string message = std::string(to_string(e.code())) + ": " + e.what();
            py::object err = py::reinterpret_borrow<py::object>(error_type.ptr())(message);
            err.attr("code") = std::string(to_string(e.code()));
            err.attr("stage") = e.stage();
            PyErr_SetObject(error_type.ptr(), err.ptr());
        }
    });

    m.def("display_title", [](const std::string& title) { return display_title(titled("_", title)); });

    m.def(
        "select_relevant",
        [](const std::map<std::string, std::vector<double>>& vectors, const std::string& recommended_id,
           const std::vector<std::string>& history, std::size_t k) {
            std::map<std::string, EmbeddingVector> unit;
            for (const auto& [id, v] : vectors) unit.emplace(id, EmbeddingVector::normalized(v));
            const EmbeddingIndex index("python", std::move(unit));
            UserHistory user{"python", {}};
            for (const auto& id : history) user.interactions.push_back({id, std::nullopt, std::nullopt});
            std::vector<std::pair<std::string, double>> out;
            for (const auto& s : select_relevant(index, recommended_id, user, k).ranked) out.emplace_back(s.item_id, s.score);
            return out;
        },
        py::arg("vectors"), py::arg("recommended_id"), py::arg("history"), py::arg("k") = kDefaultTopK,
        "Top-k history items by cosine similarity; ties by ascending id.");

    m.def("parse_aspect_response", &parse_aspect_response, py::arg("raw"));

    m.def(
        "validate_explanation",
        [](const std::string& text, const std::string& recommended_title, const std::vector<std::string>& watched) {
            std::vector<Item> relevant;
            for (std::size_t i = 0; i < watched.size(); ++i) relevant.push_back(titled("w" + std::to_string(i), watched[i]));
            return to_json(validate_explanation(text, titled("rec", recommended_title), relevant)).dump();
        },
        py::arg("text"), py::arg("recommended_title"), py::arg("watched_titles"));

    m.def(
        "mean_and_sem",
        [](const std::vector<double>& xs) {
            const auto s = mean_and_sem(xs);
            return py::make_tuple(s.mean, s.sample_sd ? py::cast(*s.sample_sd) : py::none(),
                                  s.sem ? py::cast(*s.sem) : py::none());
        },
        py::arg("scores"));

    m.def(
        "welch_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = welch_t_test(a, b);
            return py::make_tuple(r.t, r.df, r.p_two_sided);
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "cohens_d", [](const std::vector<double>& a, const std::vector<double>& b) { return cohens_d(a, b); },
        py::arg("a"), py::arg("b"));

    m.def(
        "stats_report",
        [](const std::string& ratings_log) {
            const CriterionSet criteria;
            const RatingStore store(criteria, std::filesystem::path(ratings_log));
            return to_json(build_stats_report(store.snapshot(), criteria)).dump();
        },
        py::arg("ratings_log"), "JSON StatsReport for a ratings log.");

    m.def(
        "ingest",
        [](const std::map<std::string, std::string>& settings, const std::string& catalog, const std::string& format,
           const std::string& history) {
            const auto config = config_from(settings);
            IngestOptions options{catalog, parse_catalog_format(format), std::nullopt, std::nullopt};
            if (!history.empty()) options.history = history;
            return ingest_workspace({config.data_dir}, options).items;
        },
        py::arg("settings"), py::arg("catalog"), py::arg("format") = "jsonl", py::arg("history") = "");

    m.def(
        "embed",
        [](const std::map<std::string, std::string>& settings) {
            const auto config = config_from(settings);
            auto provider = make_embedding_provider(config);
            return embed_workspace({config.data_dir}, *provider).up_to_date;
        },
        py::arg("settings"), "Returns True when the index was already up to date.");

    m.def(
        "explain",
        [](const std::map<std::string, std::string>& settings, const std::string& recommended_id,
           const std::string& user_id, const std::string& method) {
            py::gil_scoped_release release;
            Runtime runtime(config_from(settings));
            return to_json(runtime.explain(recommended_id, user_id, parse_method(method))).dump();
        },
        py::arg("settings"), py::arg("recommended_id"), py::arg("user_id"), py::arg("method"));
}
