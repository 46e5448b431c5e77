#include "recexplain/explanation.hpp"

#include "recexplain/util.hpp"

#include <cctype>
#include <regex>

namespace recexplain {

namespace {

std::string plot_text(const Item& item) {
    auto plot = trim(item.plot);
    return plot.empty() ? "(not available)" : plot;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

bool mentions(const std::string& normalized_text, const Item& item) {
    for (const auto& title : {display_title(item), item.title}) {
        auto needle = normalize_for_match(title);
        if (needle.size() > 2 && normalized_text.find(needle) != std::string::npos) return true;
    }
    return false;
}

std::size_t count_sentences(const std::string& text) {
    std::size_t n = 0;
    bool content = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '.' || c == '!' || c == '?') {
            const bool boundary = i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])) ||
                                  text[i + 1] == '"' || text[i + 1] == '\'';
            if (boundary && content) {
                ++n;
                content = false;
            }
        } else if (std::isalnum(static_cast<unsigned char>(c))) {
            content = true;
        }
    }
    return n + (content ? 1 : 0);
}

GenerationParams step_params(GenerationParams params, std::size_t step, const PromptTemplates& templates) {
    if (step < 3) {
        params.stop_sequences.push_back(render_template(templates.cot_step, {{"n", std::to_string(step + 1)}}));
    }
    return params;
}

nlohmann::ordered_json selection_json(const RelevantSelection& s) {
    nlohmann::ordered_json j;
    j["recommended_id"] = s.recommended_id;
    j["k_requested"] = s.k_requested;
    j["ranked"] = nlohmann::ordered_json::array();
    for (const auto& r : s.ranked) j["ranked"].push_back({{"item_id", r.item_id}, {"score", r.score}});
    return j;
}

nlohmann::ordered_json request_json(const ExplanationRequest& r) {
    nlohmann::ordered_json j;
    j["recommended_id"] = r.recommended_id;
    j["method"] = to_string(r.method);
    j["k"] = r.k;
    j["params"] = to_json(r.params);
    j["user_history"] = to_json(r.user_history);
    return j;
}

nlohmann::ordered_json content_json(const Explanation& e) {
    nlohmann::ordered_json j;
    j["method"] = to_string(e.request.method);
    j["recommended_id"] = e.request.recommended_id;
    j["user_id"] = e.request.user_history.user_id;
    j["text"] = e.text;
    j["request"] = request_json(e.request);
    j["relevant_items"] = selection_json(e.relevant_items);
    j["aspects_used"] = e.aspects_used;
    j["prompt"] = e.prompt;
    j["raw_output"] = e.raw_output;
    j["cot_trace"] = nlohmann::ordered_json::array();
    for (const auto& step : e.cot_trace) {
        j["cot_trace"].push_back({{"label", step.label}, {"prompt", step.prompt}, {"raw_output", step.raw_output}});
    }
    j["validation"] = to_json(e.validation);
    return j;
}

// Error raised inside a stage, re-labelled for the caller.
template <typename Fn>
auto staged(const std::string& stage, const std::vector<CotStep>& trace, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const GenerationError&) {
        throw;
    } catch (const Error& e) {
        throw GenerationError(e, stage, trace);
    }
}

}  // namespace

std::string to_string(ExplanationMethod method) {
    return method == ExplanationMethod::zero_shot ? "zero_shot" : "logic_scaffolding";
}

ExplanationMethod parse_method(const std::string& name) {
    if (name == "zero_shot") return ExplanationMethod::zero_shot;
    if (name == "logic_scaffolding") return ExplanationMethod::logic_scaffolding;
    throw Error(ErrorCode::contract, "unknown explanation method '" + name + "'");
}

std::string normalize_for_match(std::string_view text) {
    std::string out = " ";
    for (unsigned char c : text) {
        char mapped = (c < 0x80 && !std::isalnum(c)) ? ' ' : static_cast<char>(std::tolower(c));
        if (mapped == ' ' && out.back() == ' ') continue;
        out.push_back(mapped);
    }
    if (out.back() != ' ') out.push_back(' ');
    return out;
}

nlohmann::ordered_json to_json(const ValidationReport& report) {
    nlohmann::ordered_json j;
    j["personalization_hit"] = report.personalization_hit;
    j["subject_hit"] = report.subject_hit;
    j["no_markup"] = report.no_markup;
    j["length_ok"] = report.length_ok;
    j["utterance_ok"] = report.utterance_ok;
    j["details"] = report.details;
    return j;
}

ValidationReport validate_explanation(const std::string& text, const Item& rec, const std::vector<Item>& relevant_items,
                                      const ValidationConfig& config) {
    static const std::regex html_tag("<[a-zA-Z/][^>]*>");
    ValidationReport report;
    const auto normalized = normalize_for_match(text);

    std::vector<std::string> named;
    for (const auto& item : relevant_items) {
        if (item.id != rec.id && mentions(normalized, item)) named.push_back(display_title(item));
    }
    report.personalization_hit = !named.empty();
    report.details["personalization"] =
        named.empty() ? "no watched title mentioned" : "mentions " + join(named, ", ");

    report.subject_hit = mentions(normalized, rec);
    report.details["subject"] = (report.subject_hit ? "mentions " : "does not mention ") + display_title(rec);

    std::smatch tag;
    report.no_markup = !std::regex_search(text, tag, html_tag);
    report.details["markup"] = report.no_markup ? "no markup" : "found tag " + tag.str();

    const auto sentences = count_sentences(text);
    const auto words = count_words(text);
    report.length_ok = sentences >= config.min_sentences && sentences <= config.max_sentences &&
                       words >= config.min_words && words <= config.max_words;
    report.details["length"] = std::to_string(sentences) + " sentences, " + std::to_string(words) + " words";

    std::vector<std::string> boilerplate;
    for (const auto& phrase : config.boilerplate) {
        if (normalized.find(normalize_for_match(phrase)) != std::string::npos) boilerplate.push_back(phrase);
    }
    bool second_person = false;
    for (const char* pronoun : {" you ", " your ", " yours ", " yourself ", " yourselves "}) {
        second_person = second_person || normalized.find(pronoun) != std::string::npos;
    }
    report.utterance_ok = boilerplate.empty() && second_person;
    if (!boilerplate.empty()) {
        report.details["utterance"] = "boilerplate: " + join(boilerplate, ", ");
    } else {
        report.details["utterance"] = second_person ? "addresses the user" : "never addresses the user";
    }
    return report;
}

std::string build_zero_shot_prompt(const Item& rec, const std::vector<Item>& history_items,
                                   const PromptTemplates& templates) {
    if (history_items.empty()) throw Error(ErrorCode::contract, "zero-shot prompt needs at least one history item");
    std::vector<std::string> lines;
    for (const auto& item : history_items) lines.push_back("- " + display_title(item));
    return render_template(templates.zero_shot,
                           {{"history", join(lines, "\n")}, {"title", display_title(rec)}, {"plot", plot_text(rec)}});
}

std::string build_cot_prompt(const Item& rec, const std::vector<std::string>& rec_aspects,
                             const std::vector<ItemAspects>& relevant, const PromptTemplates& templates) {
    if (relevant.empty()) throw Error(ErrorCode::contract, "chain-of-thought prompt needs relevant items");
    std::vector<std::string> missing;
    if (rec_aspects.empty()) missing.push_back(rec.id);
    for (const auto& [item, aspects] : relevant) {
        if (aspects.empty()) missing.push_back(item.id);
    }
    if (!missing.empty()) throw Error(ErrorCode::contract, "missing aspects for items: " + join(missing, ", "));

    std::vector<std::string> blocks;
    for (const auto& [item, aspects] : relevant) {
        blocks.push_back("Title: " + display_title(item) + "\nPlot: " + plot_text(item) + "\nAspects: " +
                         join(aspects, "; "));
    }
    return render_template(templates.cot, {{"title", display_title(rec)},
                                           {"plot", plot_text(rec)},
                                           {"aspects", join(rec_aspects, "; ")},
                                           {"watched", join(blocks, "\n\n")}});
}

std::string build_cot_step_prompt(const std::string& base, const std::vector<std::string>& earlier_outputs,
                                  const PromptTemplates& templates) {
    if (earlier_outputs.size() >= 3) throw Error(ErrorCode::contract, "chain of thought has three steps");
    std::string prompt = base;
    for (std::size_t i = 0; i < earlier_outputs.size(); ++i) {
        prompt += "\n\n" + render_template(templates.cot_step, {{"n", std::to_string(i + 1)}}) + " " +
                  trim(earlier_outputs[i]);
    }
    prompt += "\n\n" + render_template(templates.cot_step, {{"n", std::to_string(earlier_outputs.size() + 1)}});
    return prompt;
}

Explanation generate_explanation(const ExplanationRequest& request, ExplanationContext& ctx) {
    Explanation out;
    out.request = request;
    std::vector<CotStep>& trace = out.cot_trace;

    const Item& rec = staged("request", trace, [&]() -> const Item& {
        request.params.validate();
        check_history(ctx.catalog, request.user_history);
        return ctx.catalog.at(request.recommended_id);
    });

    out.relevant_items = staged("selection", trace, [&] {
        auto selection = select_relevant(ctx.index, request.recommended_id, request.user_history, request.k);
        if (selection.ranked.empty()) {
            throw Error(ErrorCode::contract, "user '" + request.user_history.user_id +
                                                 "' has no history items other than the recommendation");
        }
        return selection;
    });
    std::vector<Item> relevant;
    for (const auto& scored : out.relevant_items.ranked) relevant.push_back(ctx.catalog.at(scored.item_id));

    if (request.method == ExplanationMethod::zero_shot) {
        out.prompt = staged("prompt", trace, [&] { return build_zero_shot_prompt(rec, relevant, ctx.templates); });
        auto record = staged("zero_shot", trace, [&] { return ctx.gateway.complete(out.prompt, request.params); });
        out.raw_output = record.output;
        out.text = trim(record.output);
        if (out.text.empty()) {
            throw GenerationError(Error(ErrorCode::parse, "backend returned an empty explanation"), "zero_shot", trace);
        }
    } else {
        const auto params = aspect_params(request.params);
        auto aspects_for = [&](const Item& item) {
            return staged("aspects", trace, [&] {
                return extract_aspects(item, ctx.gateway, ctx.examples, ctx.aspect_cache, ctx.templates, params).aspects;
            });
        };
        auto rec_aspects = aspects_for(rec);
        out.aspects_used[rec.id] = rec_aspects;
        std::vector<ItemAspects> relevant_aspects;
        for (const auto& item : relevant) {
            auto aspects = aspects_for(item);
            out.aspects_used[item.id] = aspects;
            relevant_aspects.emplace_back(item, std::move(aspects));
        }

        const auto base = staged("prompt", trace,
                                 [&] { return build_cot_prompt(rec, rec_aspects, relevant_aspects, ctx.templates); });
        std::vector<std::string> outputs;
        for (std::size_t step = 1; step <= 3; ++step) {
            const auto stage = "cot_step_" + std::to_string(step);
            auto prompt = staged(stage, trace, [&] { return build_cot_step_prompt(base, outputs, ctx.templates); });
            auto record = staged(stage, trace, [&] {
                return ctx.gateway.complete(prompt, step_params(request.params, step, ctx.templates));
            });
            trace.push_back({kCotStepLabels[step - 1], prompt, record.output});
            outputs.push_back(record.output);
        }
        out.text = trim(outputs.back());
        if (out.text.empty()) {
            throw GenerationError(Error(ErrorCode::parse, "step 3 produced an empty explanation"), "cot_step_3", trace);
        }
    }

    out.validation = validate_explanation(out.text, rec, relevant, ctx.validation);
    out.id = "exp-" + sha256_hex(content_json(out).dump()).substr(0, 16);
    return out;
}

nlohmann::ordered_json to_json(const Explanation& explanation) {
    nlohmann::ordered_json j;
    j["id"] = explanation.id;
    const auto content = content_json(explanation);
    for (const auto& [key, value] : content.items()) j[key] = value;
    return j;
}

Explanation explanation_from_json(const nlohmann::json& j) {
    try {
        Explanation e;
        e.id = j.at("id").get<std::string>();
        const auto& r = j.at("request");
        e.request.recommended_id = r.at("recommended_id").get<std::string>();
        e.request.method = parse_method(r.at("method").get<std::string>());
        e.request.k = r.at("k").get<std::size_t>();
        e.request.params = params_from_json(r.at("params"));
        const auto& h = r.at("user_history");
        e.request.user_history.user_id = h.at("user_id").get<std::string>();
        for (const auto& row : h.at("interactions")) {
            Interaction interaction{row.at("item_id").get<std::string>(), std::nullopt, std::nullopt};
            if (!row.at("rating").is_null()) interaction.rating = row.at("rating").get<int>();
            if (!row.at("timestamp").is_null()) interaction.timestamp = row.at("timestamp").get<std::int64_t>();
            e.request.user_history.interactions.push_back(std::move(interaction));
        }
        e.text = j.at("text").get<std::string>();
        const auto& s = j.at("relevant_items");
        e.relevant_items.recommended_id = s.at("recommended_id").get<std::string>();
        e.relevant_items.k_requested = s.at("k_requested").get<std::size_t>();
        for (const auto& row : s.at("ranked")) {
            e.relevant_items.ranked.push_back({row.at("item_id").get<std::string>(), row.at("score").get<double>()});
        }
        e.aspects_used = j.at("aspects_used").get<std::map<std::string, std::vector<std::string>>>();
        e.prompt = j.at("prompt").get<std::string>();
        e.raw_output = j.at("raw_output").get<std::string>();
        for (const auto& step : j.at("cot_trace")) {
            e.cot_trace.push_back({step.at("label").get<std::string>(), step.at("prompt").get<std::string>(),
                                   step.at("raw_output").get<std::string>()});
        }
        const auto& v = j.at("validation");
        e.validation.personalization_hit = v.at("personalization_hit").get<bool>();
        e.validation.subject_hit = v.at("subject_hit").get<bool>();
        e.validation.no_markup = v.at("no_markup").get<bool>();
        e.validation.length_ok = v.at("length_ok").get<bool>();
        e.validation.utterance_ok = v.at("utterance_ok").get<bool>();
        e.validation.details = v.at("details").get<std::map<std::string, std::string>>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::parse, std::string("malformed explanation record: ") + ex.what());
    }
}

}  // namespace recexplain
