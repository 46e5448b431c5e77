#include <gtest/gtest.h>

#include "recexplain/explanation.hpp"
#include "recexplain/util.hpp"
#include "test_support.hpp"

using namespace recexplain;

namespace {

const std::string kPersonalizationFailure =
    "The Godfather is a classic film that has stood the test of time and is widely regarded as one of the greatest "
    "movies ever made.  It features an iconic performance by Marlon Brando and a  gripping storyline that explores "
    "themes of family,  loyalty, and power.";
const std::string kFactualityFailure =
    "Based on our analysis so far we can suggest you watch Scarace which is also an epic crime saga like GoodFella "
    "but has more action scenes than drama.";
const std::string kRobustnessFailure =
    "The recommendation is based on similar genres or themes that have been previously watched by users who also "
    "enjoyed this particular film.";
const std::string kReadabilityFailure =
    "<li>System: What other factors are taken into consideration while recommending these specific films?</li>"
    "<ol type='a'><li>Genre:</li>\n<li>Romance;</li> <li>Science Fiction/Fantasy;</li>...";
const std::string kScaffoldedText =
    "You might find yourself enjoying a classic gangster drama like The Godfather based on past viewing habits that "
    "include other popular films in this genre such as Scarface and Goodfellas.";

struct Fixture {
    Catalog catalog;
    std::vector<UserHistory> histories;
    EmbeddingIndex index;
    std::vector<AspectExample> examples;

    Fixture() {
        const auto base = ingest_catalog(testsupport::fixtures() / "movies.dat", CatalogFormat::movielens).catalog;
        catalog = merge_metadata(base, load_metadata(testsupport::fixtures() / "metadata.jsonl")).catalog;
        histories = load_history(testsupport::fixtures() / "history.dat");
        HashingEmbeddingProvider provider;
        index = build_index(catalog, provider);
        examples = load_examples(testsupport::fixtures() / "priming_examples.v1.json");
    }

    std::vector<Item> godfather_history() const {
        std::vector<Item> out;
        for (const char* id : {"2", "3", "4", "5", "6"}) out.push_back(catalog.at(id));
        return out;
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

ExplanationRequest request_for(const std::string& rec, const std::string& user, ExplanationMethod method) {
    for (const auto& h : fixture().histories) {
        if (h.user_id == user) return {rec, h, method, {}, kDefaultTopK};
    }
    throw std::runtime_error("no such fixture user");
}

}  // namespace

TEST(Validation, PersonalizationFailureIgnoresHistory) {
    const auto& f = fixture();
    const auto r = validate_explanation(kPersonalizationFailure, f.catalog.at("1"), f.godfather_history());
    EXPECT_FALSE(r.personalization_hit);
    EXPECT_TRUE(r.subject_hit);
    EXPECT_EQ(r.details.at("personalization"), "no watched title mentioned");
}

TEST(Validation, FactualityFailureMissesSubject) {
    const auto& f = fixture();
    const auto r = validate_explanation(kFactualityFailure, f.catalog.at("1"), f.godfather_history());
    EXPECT_FALSE(r.subject_hit);
    EXPECT_EQ(r.details.at("subject"), "does not mention The Godfather");
}

TEST(Validation, RobustnessFailureIsGenericBoilerplate) {
    const auto& f = fixture();
    const auto r = validate_explanation(kRobustnessFailure, f.catalog.at("1"), f.godfather_history());
    EXPECT_FALSE(r.utterance_ok);
    EXPECT_FALSE(r.subject_hit);
    EXPECT_FALSE(r.personalization_hit);
    EXPECT_NE(r.details.at("utterance").find("the recommendation is based on"), std::string::npos);
}

TEST(Validation, ReadabilityFailureCarriesMarkup) {
    const auto& f = fixture();
    const auto r = validate_explanation(kReadabilityFailure, f.catalog.at("1"), f.godfather_history());
    EXPECT_FALSE(r.no_markup);
    EXPECT_EQ(r.details.at("markup"), "found tag <li>");
}

TEST(Validation, ScaffoldedTextPassesEveryFlag) {
    const auto& f = fixture();
    const auto r = validate_explanation(kScaffoldedText, f.catalog.at("1"), f.godfather_history());
    EXPECT_TRUE(r.personalization_hit);
    EXPECT_TRUE(r.subject_hit);
    EXPECT_TRUE(r.no_markup);
    EXPECT_TRUE(r.length_ok);
    EXPECT_TRUE(r.utterance_ok);
    EXPECT_TRUE(r.all_ok());
    EXPECT_EQ(r.details.at("personalization"), "mentions Scarface, GoodFellas");
    EXPECT_EQ(r.details.at("length"), "1 sentences, 30 words");
}

TEST(Validation, MatchingIgnoresCaseAndPunctuation) {
    EXPECT_EQ(normalize_for_match("Monsters, Inc.!"), " monsters inc ");
    Item rec{"r", "Monsters, Inc. (2001)", "", {}, std::nullopt, std::nullopt};
    Item watched{"w", "Toy Story (1995)", "", {}, std::nullopt, std::nullopt};
    const auto r = validate_explanation("You loved TOY-STORY, so you will love monsters inc next.", rec, {watched});
    EXPECT_TRUE(r.personalization_hit);
    EXPECT_TRUE(r.subject_hit);
    EXPECT_FALSE(validate_explanation("You like Toy Storyline and more things here.", rec, {watched}).personalization_hit);
}

TEST(Validation, LengthBounds) {
    Item rec{"r", "Heat", "", {}, std::nullopt, std::nullopt};
    EXPECT_FALSE(validate_explanation("You will like Heat.", rec, {}).length_ok);
    EXPECT_FALSE(validate_explanation("You like Heat a lot. A. B. C. D is here now.", rec, {}).length_ok);
    std::string longer;
    for (int i = 0; i < 121; ++i) longer += "word ";
    EXPECT_FALSE(validate_explanation(longer, rec, {}).length_ok);
    EXPECT_TRUE(validate_explanation("You will like Heat because it is tense and sharp. It is great.", rec, {}).length_ok);
}

TEST(Prompts, ZeroShotListsHistoryWithDisplayTitles) {
    const auto& f = fixture();
    const auto prompt = build_zero_shot_prompt(f.catalog.at("1"), {f.catalog.at("2"), f.catalog.at("6")});
    EXPECT_TRUE(prompt.starts_with("The user has watched the following movies:\n- Scarface\n- The Shawshank Redemption\n\n"));
    EXPECT_NE(prompt.find("Title: The Godfather\nPlot: "), std::string::npos);
    EXPECT_TRUE(prompt.ends_with("Explain why the user would enjoy the recommended movie.\nExplanation:"));
    EXPECT_THROW(build_zero_shot_prompt(f.catalog.at("1"), {}), Error);
}

TEST(Prompts, CotBaseAndSteps) {
    Item rec{"1", "Heat", "", {}, std::nullopt, std::nullopt};
    Item seen{"2", "Casino", "Vegas.", {}, std::nullopt, std::nullopt};
    const auto base = build_cot_prompt(rec, {"heist crew", "cop chase"}, {{seen, {"mob casino"}}});
    EXPECT_NE(base.find("Title: Heat\nPlot: (not available)\nAspects: heist crew; cop chase\n"), std::string::npos);
    EXPECT_TRUE(base.ends_with("Movies the user has watched:\nTitle: Casino\nPlot: Vegas.\nAspects: mob casino"));
    EXPECT_EQ(build_cot_step_prompt(base, {}), base + "\n\nStep 1 answer:");
    EXPECT_EQ(build_cot_step_prompt(base, {" one ", "two"}),
              base + "\n\nStep 1 answer: one\n\nStep 2 answer: two\n\nStep 3 answer:");
    EXPECT_THROW(build_cot_step_prompt(base, {"a", "b", "c"}), Error);
    try {
        build_cot_prompt(rec, {"x"}, {{seen, {}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::contract);
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
}

TEST(Methods, NamesRoundTrip) {
    EXPECT_EQ(parse_method("zero_shot"), ExplanationMethod::zero_shot);
    EXPECT_EQ(to_string(parse_method("logic_scaffolding")), "logic_scaffolding");
    EXPECT_THROW(parse_method("both"), Error);
}

TEST(Generate, SyntheticTwoDimensionalIndex) {
    std::map<std::string, Item> items;
    for (const auto& [id, title] : std::vector<std::pair<std::string, std::string>>{
             {"a", "Alpha Quest"}, {"b", "Beta Run"}, {"c", "Gamma Ray"}, {"d", "Delta Force Nine"}}) {
        items[id] = Item{id, title, "Plot of " + title + ".", {}, std::nullopt, std::nullopt};
    }
    const Catalog catalog(items, "synthetic");
    const EmbeddingIndex index("toy", {{"a", EmbeddingVector::normalized({1, 0})},
                                       {"b", EmbeddingVector::normalized({1, 0.1})},
                                       {"c", EmbeddingVector::normalized({0, 1})},
                                       {"d", EmbeddingVector::normalized({1, 1})}});
    std::vector<ScriptRule> rules = {
        {MatchKind::contains, "Step 3 answer:", "You will enjoy Alpha Quest just as you enjoyed Beta Run.", {}},
        {MatchKind::contains, "Step 2 answer:", "Fast adventures.", {}},
        {MatchKind::contains, "Step 1 answer:", "Both are quests.", {}},
        {MatchKind::contains, "Plot:", "1. questing heroes\n2. fast adventure", {}},
    };
    Gateway gateway(make_scripted_provider(rules));
    AspectCache cache;
    const auto examples = load_examples(testsupport::fixtures() / "priming_examples.v1.json");
    ExplanationContext ctx{catalog, index, gateway, cache, examples};
    ExplanationRequest request{"a", {"u", {{"b", {}, {}}, {"c", {}, {}}, {"d", {}, {}}}},
                               ExplanationMethod::logic_scaffolding, {}, 2};

    const auto e = generate_explanation(request, ctx);
    ASSERT_EQ(e.cot_trace.size(), 3u);
    EXPECT_EQ(e.text, "You will enjoy Alpha Quest just as you enjoyed Beta Run.");
    EXPECT_EQ(e.cot_trace[0].label, "shared_aspects");
    EXPECT_EQ(e.cot_trace[2].label, "explanation");
    EXPECT_NE(e.cot_trace[1].prompt.find("Step 1 answer: Both are quests."), std::string::npos);
    EXPECT_NE(e.cot_trace[2].prompt.find("Step 2 answer: Fast adventures."), std::string::npos);
    ASSERT_EQ(e.relevant_items.ranked.size(), 2u);
    EXPECT_EQ(e.relevant_items.ranked[0].item_id, "b");
    EXPECT_EQ(e.relevant_items.ranked[1].item_id, "d");
    EXPECT_EQ(e.aspects_used.size(), 3u);
    EXPECT_TRUE(e.prompt.empty());
    EXPECT_TRUE(e.validation.all_ok());
    EXPECT_EQ(gateway.calls(), 6u);

    const auto records = gateway.audit().records();
    EXPECT_EQ(records[3].params.stop_sequences, std::vector<std::string>{"Step 2 answer:"});
    EXPECT_EQ(records[4].params.stop_sequences, std::vector<std::string>{"Step 3 answer:"});
    EXPECT_TRUE(records[5].params.stop_sequences.empty());
    EXPECT_EQ(records[5].params.max_tokens, kExplanationMaxTokens);

    const auto again = generate_explanation(request, ctx);
    EXPECT_EQ(again.id, e.id);
    EXPECT_EQ(to_json(again).dump(), to_json(e).dump());
    EXPECT_EQ(gateway.calls(), 9u);
    EXPECT_EQ(to_json(explanation_from_json(nlohmann::json::parse(to_json(e).dump()))).dump(), to_json(e).dump());
}

TEST(Generate, ZeroShotIsOneCallWithEmptyTrace) {
    const auto& f = fixture();
    Gateway gateway(make_scripted_provider(load_script(testsupport::fixtures() / "llm_script.json")));
    AspectCache cache;
    ExplanationContext ctx{f.catalog, f.index, gateway, cache, f.examples};
    const auto e = generate_explanation(request_for("1", "1", ExplanationMethod::zero_shot), ctx);
    EXPECT_EQ(gateway.calls(), 1u);
    EXPECT_TRUE(e.cot_trace.empty());
    EXPECT_EQ(e.text, trim(e.raw_output));
    EXPECT_NE(e.prompt.find("- Scarface\n"), std::string::npos);
    EXPECT_EQ(e.relevant_items.ranked.size(), 5u);
    EXPECT_FALSE(e.validation.personalization_hit);
    EXPECT_EQ(cache.size(), 0u);
    EXPECT_TRUE(e.id.starts_with("exp-"));
    EXPECT_EQ(e.id.size(), 20u);
}

TEST(Generate, GodfatherScenarioReturnsStepThreeOutput) {
    const auto& f = fixture();
    auto rules = load_script(testsupport::fixtures() / "llm_script.json");
    rules.insert(rules.begin(), {MatchKind::contains, "Step 3 answer:", kScaffoldedText, {"Title: The Godfather\n"}});
    Gateway gateway(make_scripted_provider(rules));
    AspectCache cache;
    ExplanationContext ctx{f.catalog, f.index, gateway, cache, f.examples};
    const auto e = generate_explanation(request_for("1", "1", ExplanationMethod::logic_scaffolding), ctx);
    EXPECT_EQ(e.text, kScaffoldedText);
    EXPECT_EQ(e.cot_trace.size(), 3u);
    EXPECT_TRUE(e.validation.all_ok());
    EXPECT_EQ(gateway.calls(), 6u + 3u);
    EXPECT_EQ(e.aspects_used.size(), 6u);
}

TEST(Generate, StageLabelsOnFailure) {
    const auto& f = fixture();
    auto rules = load_script(testsupport::fixtures() / "llm_script.json");
    std::erase_if(rules, [](const ScriptRule& r) { return r.pattern.starts_with("Step "); });
    rules.push_back({MatchKind::regex, "Step 1 answer:$", "one", {}});
    rules.push_back({MatchKind::regex, "Step 2 answer:$", "two", {}});
    Gateway gateway(make_scripted_provider(rules));
    AspectCache cache;
    ExplanationContext ctx{f.catalog, f.index, gateway, cache, f.examples};
    try {
        generate_explanation(request_for("1", "1", ExplanationMethod::logic_scaffolding), ctx);
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.stage(), "cot_step_3");
        EXPECT_EQ(e.code(), ErrorCode::no_script);
        EXPECT_EQ(e.partial_trace().size(), 2u);
    }
    auto bad = request_for("999", "1", ExplanationMethod::zero_shot);
    try {
        generate_explanation(bad, ctx);
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.stage(), "request");
        EXPECT_EQ(e.code(), ErrorCode::lookup);
    }
    auto lonely = request_for("2", "1", ExplanationMethod::zero_shot);
    lonely.user_history.interactions = {{"2", {}, {}}};
    try {
        generate_explanation(lonely, ctx);
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.stage(), "selection");
        EXPECT_EQ(e.code(), ErrorCode::contract);
    }
    auto hot = request_for("1", "1", ExplanationMethod::zero_shot);
    hot.params.temperature = -1.0;
    try {
        generate_explanation(hot, ctx);
        FAIL();
    } catch (const GenerationError& e) {
        EXPECT_EQ(e.stage(), "request");
    }
}
