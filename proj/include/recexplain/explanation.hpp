#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recexplain/aspects.hpp"
#include "recexplain/catalog.hpp"
#include "recexplain/embedding.hpp"
#include "recexplain/error.hpp"
#include "recexplain/llm_gateway.hpp"
#include "recexplain/templates.hpp"

namespace recexplain {

enum class ExplanationMethod { zero_shot, logic_scaffolding };

std::string to_string(ExplanationMethod method);
// Throws Error{contract} for names other than "zero_shot" / "logic_scaffolding".
ExplanationMethod parse_method(const std::string& name);

struct ExplanationRequest {
    std::string recommended_id;
    UserHistory user_history;
    ExplanationMethod method = ExplanationMethod::logic_scaffolding;
    GenerationParams params;
    std::size_t k = kDefaultTopK;
};

struct CotStep {
    std::string label;
    std::string prompt;
    std::string raw_output;

    bool operator==(const CotStep&) const = default;
};

struct ValidationReport {
    bool personalization_hit = false;  // names a watched title
    bool subject_hit = false;          // names the recommended title
    bool no_markup = false;            // no HTML tags
    bool length_ok = false;            // sentence and word counts in range
    bool utterance_ok = false;         // addressed to the user, no boilerplate
    std::map<std::string, std::string> details;

    bool all_ok() const { return personalization_hit && subject_hit && no_markup && length_ok && utterance_ok; }
};

struct ValidationConfig {
    std::size_t min_sentences = 1;
    std::size_t max_sentences = 4;
    std::size_t min_words = 10;
    std::size_t max_words = 120;
    std::vector<std::string> boilerplate = {
        "the recommendation is based on", "similar genres or themes", "users who also enjoyed",
        "this particular film", "as an ai", "as a language model", "i cannot", "i am not sure",
        "i'm not sure", "it is possible that", "may or may not",
    };
};

struct Explanation {
    std::string id;
    ExplanationRequest request;
    std::string text;
    RelevantSelection relevant_items;
    std::map<std::string, std::vector<std::string>> aspects_used;
    // zero_shot: the single prompt and its raw output; empty for logic_scaffolding.
    std::string prompt;
    std::string raw_output;
    std::vector<CotStep> cot_trace;  // exactly 3 for logic_scaffolding, empty for zero_shot
    ValidationReport validation;
};

nlohmann::ordered_json to_json(const Explanation& explanation);
Explanation explanation_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ValidationReport& report);

// Lowercase, ASCII punctuation to spaces, whitespace collapsed, padded with one
// space each side so that " title " matches on word boundaries.
std::string normalize_for_match(std::string_view text);

ValidationReport validate_explanation(const std::string& text, const Item& rec, const std::vector<Item>& relevant_items,
                                      const ValidationConfig& config = {});

std::string build_zero_shot_prompt(const Item& rec, const std::vector<Item>& history_items,
                                   const PromptTemplates& templates = PromptTemplates::defaults());

using ItemAspects = std::pair<Item, std::vector<std::string>>;

std::string build_cot_prompt(const Item& rec, const std::vector<std::string>& rec_aspects,
                             const std::vector<ItemAspects>& relevant,
                             const PromptTemplates& templates = PromptTemplates::defaults());

// Prompt for CoT step earlier_outputs.size() + 1: the base prompt, each earlier
// step's cue and answer, then the cue for this step.
std::string build_cot_step_prompt(const std::string& base, const std::vector<std::string>& earlier_outputs,
                                  const PromptTemplates& templates = PromptTemplates::defaults());

inline constexpr const char* kCotStepLabels[3] = {"shared_aspects", "preference_linkage", "explanation"};

// Raised by generate_explanation; carries whatever CoT steps completed.
class GenerationError : public Error {
public:
    GenerationError(const Error& cause, std::string stage, std::vector<CotStep> partial)
        : Error(cause.with_stage(std::move(stage))), partial_trace_(std::move(partial)) {}
    const std::vector<CotStep>& partial_trace() const { return partial_trace_; }

private:
    std::vector<CotStep> partial_trace_;
};

struct ExplanationContext {
    const Catalog& catalog;
    const EmbeddingIndex& index;
    Gateway& gateway;
    AspectCache& aspect_cache;
    const std::vector<AspectExample>& examples;
    PromptTemplates templates = PromptTemplates::defaults();
    ValidationConfig validation;
};

// Runs one arm end to end and attaches a ValidationReport. Failures surface as
// GenerationError labelled with the stage that failed.
Explanation generate_explanation(const ExplanationRequest& request, ExplanationContext& context);

}  // namespace recexplain
