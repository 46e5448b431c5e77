#include <gtest/gtest.h>

#include <random>

#include "recexplain/aspects.hpp"
#include "recexplain/error.hpp"
#include "recexplain/util.hpp"
#include "test_support.hpp"

using namespace recexplain;
using Aspects = std::vector<std::string>;

namespace {

std::vector<AspectExample> fixture_examples() {
    return load_examples(testsupport::fixtures() / "priming_examples.v1.json");
}

Item heat() { return {"4", "Heat (1995)", "  A thief and a detective circle each other.\n", {"Crime"}, 1995, std::nullopt}; }

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::config;
}

}  // namespace

TEST(GenericAspects, BareGenresOnly) {
    EXPECT_TRUE(is_generic_aspect("drama"));
    EXPECT_TRUE(is_generic_aspect(" Action "));
    EXPECT_TRUE(is_generic_aspect("comedies"));
    EXPECT_FALSE(is_generic_aspect("family drama"));
    EXPECT_FALSE(is_generic_aspect("heist"));
}

TEST(Examples, FixtureIsValidAndInvariantsEnforced) {
    EXPECT_EQ(fixture_examples().size(), 3u);
    auto broken = [](AspectExample e) { return code_of([&] { validate_example(e); }); };
    EXPECT_EQ(broken({"X", {"drama", "family saga"}}), ErrorCode::contract);
    EXPECT_EQ(broken({"X", {"only one aspect"}}), ErrorCode::contract);
    EXPECT_EQ(broken({"X", {"Family Saga", "crime story"}}), ErrorCode::contract);
    EXPECT_EQ(broken({"X", {"saga", "crime story"}}), ErrorCode::contract);
    EXPECT_EQ(broken({"X", {"a b c d e f g", "crime story"}}), ErrorCode::contract);
    EXPECT_EQ(broken({"", {"family saga", "crime story"}}), ErrorCode::contract);
    EXPECT_EQ(code_of([] { examples_from_json(nlohmann::json::parse(R"([{"item_title": "X"}])")); }), ErrorCode::config);
}

TEST(AspectPrompt, GoldenFixture) {
    const auto prompt = build_aspect_prompt(heat(), fixture_examples());
    const std::string expected =
        "List the key fine-grained aspects of the following movie, in the same style as the examples.\n"
        "\n"
        "Movie: Jurassic Park\n"
        "Aspects:\n"
        "1. dinosaur theme park\n"
        "2. genetic engineering gone wrong\n"
        "3. survival against predators\n"
        "4. blockbuster creature spectacle\n"
        "\n"
        "Movie: Pride and Prejudice\n"
        "Aspects:\n"
        "1. regency era romance\n"
        "2. class and marriage\n"
        "3. witty sibling banter\n"
        "4. family drama\n"
        "\n"
        "Movie: Planet Earth\n"
        "Aspects:\n"
        "1. british documentaries\n"
        "2. antarctic wildlife survival\n"
        "3. narrated nature footage\n"
        "\n"
        "Movie: Heat\n"
        "Plot: A thief and a detective circle each other.\n"
        "Aspects:\n"
        "1.";
    EXPECT_EQ(prompt, expected);
    EXPECT_EQ(build_aspect_prompt(heat(), fixture_examples()), prompt);
}

TEST(AspectPrompt, NeedsExactlyThreeValidExamples) {
    auto examples = fixture_examples();
    examples.pop_back();
    EXPECT_EQ(code_of([&] { build_aspect_prompt(heat(), examples); }), ErrorCode::contract);
    examples = fixture_examples();
    examples[1].aspects[0] = "drama";
    EXPECT_EQ(code_of([&] { build_aspect_prompt(heat(), examples); }), ErrorCode::contract);
}

TEST(ParseAspects, ListFormats) {
    EXPECT_EQ(parse_aspect_response("1. crime family saga\n2. mafia drama\n2. Mafia Drama"),
              (Aspects{"crime family saga", "mafia drama"}));
    EXPECT_EQ(parse_aspect_response("1) heist crew\n2) LA crime thriller."), (Aspects{"heist crew", "la crime thriller"}));
    EXPECT_EQ(parse_aspect_response("- rise to power\n* drug empire\n\xE2\x80\xA2 paranoid downfall"),
              (Aspects{"rise to power", "drug empire", "paranoid downfall"}));
    EXPECT_EQ(parse_aspect_response("British documentaries, family drama"),
              (Aspects{"british documentaries", "family drama"}));
    EXPECT_EQ(parse_aspect_response("Aspects: \"epic saga\", loyalty and betrayal"),
              (Aspects{"epic saga", "loyalty and betrayal"}));
}

TEST(ParseAspects, ContinuationOfNumberedCue) {
    EXPECT_EQ(parse_aspect_response(" epic crime saga\n2. mafia family dynasty"),
              (Aspects{"epic crime saga", "mafia family dynasty"}));
    EXPECT_EQ(parse_aspect_response("Here you go:\n1. heist\n2. chase"), (Aspects{"heist", "chase"}));
}

TEST(ParseAspects, FiltersGenericLongAndCaps) {
    EXPECT_EQ(parse_aspect_response("1. drama\n2. family drama\n3. one two three four five six seven eight nine"),
              (Aspects{"family drama"}));
    std::string many;
    for (int i = 1; i <= 14; ++i) many += std::to_string(i) + ". aspect number " + std::to_string(i) + "\n";
    EXPECT_EQ(parse_aspect_response(many).size(), kMaxAspects);
}

TEST(ParseAspects, Errors) {
    try {
        parse_aspect_response("<li>Genre:</li><li>Romance;</li>");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::format);
    }
    try {
        parse_aspect_response("drama, action");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse);
        EXPECT_NE(std::string(e.what()).find("drama, action"), std::string::npos);
    }
    EXPECT_EQ(code_of([] { parse_aspect_response("  \n "); }), ErrorCode::parse);
    EXPECT_EQ(parse_aspect_response("a < b and c > d"), (Aspects{"a < b and c > d"}));
}

TEST(ParseAspects, PropertiesOnRandomInputs) {
    std::mt19937 rng(2024);
    const std::vector<std::string> words = {"crime", "family", "Saga", "drama", "heist", "LOYALTY", "paris",
                                            "rat", "chef", "ocean", "war", "epic", "\"quoted\"", "end."};
    const std::vector<std::string> markers = {"1. ", "2) ", "- ", "* ", "", "\xE2\x80\xA2 "};
    for (int round = 0; round < 300; ++round) {
        std::string raw;
        const int lines = 1 + static_cast<int>(rng() % 14);
        for (int l = 0; l < lines; ++l) {
            raw += markers[rng() % markers.size()];
            const int n = 1 + static_cast<int>(rng() % 10);
            for (int w = 0; w < n; ++w) raw += words[rng() % words.size()] + (rng() % 5 == 0 ? ", " : " ");
            raw += "\n";
        }
        Aspects parsed;
        try {
            parsed = parse_aspect_response(raw);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::parse);
            continue;
        }
        ASSERT_GE(parsed.size(), 1u);
        ASSERT_LE(parsed.size(), kMaxAspects);
        std::set<std::string> unique(parsed.begin(), parsed.end());
        EXPECT_EQ(unique.size(), parsed.size());
        for (const auto& a : parsed) {
            EXPECT_EQ(a, to_lower(a));
            EXPECT_FALSE(a.empty());
            EXPECT_LE(count_words(a), kMaxAspectWords);
            EXPECT_FALSE(is_generic_aspect(a));
        }
        EXPECT_EQ(parse_aspect_response(render_aspect_list(parsed)), parsed) << raw;
    }
}

TEST(AspectCache, RoundTripAndLastLineWins) {
    testsupport::TempDir dir;
    {
        AspectCache cache(dir / "aspects.jsonl");
        cache.put({"1", {"epic saga", "crime family"}, AspectSource::llm, "raw one", "Falcon-40b", "v1"});
        cache.put({"1", {"new saga", "crime family"}, AspectSource::llm, "raw two", "Falcon-40b", "v1"});
        cache.put({"1", {"other model"}, AspectSource::llm, "raw", "other", "v1"});
        EXPECT_EQ(cache.size(), 2u);
    }
    const auto text = read_file(dir / "aspects.jsonl");
    EXPECT_EQ(read_lines(dir / "aspects.jsonl").size(), 2u);
    EXPECT_NE(text.find(R"({"item_id":"1","aspects":["new saga","crime family"],"model_id":"Falcon-40b","template_version":"v1","raw_response":"raw two"})"),
              std::string::npos);
    append_line(dir / "aspects.jsonl",
                R"({"item_id":"1","aspects":["appended"],"model_id":"Falcon-40b","template_version":"v1","raw_response":""})");
    AspectCache reloaded(dir / "aspects.jsonl");
    const auto hit = reloaded.find({"1", "v1", "Falcon-40b"});
    ASSERT_TRUE(hit);
    EXPECT_EQ(hit->aspects, (Aspects{"appended"}));
    EXPECT_EQ(hit->source, AspectSource::cache);
    EXPECT_FALSE(reloaded.find({"1", "v2", "Falcon-40b"}));
}

TEST(ExtractAspects, ParsesCachesAndSkipsGatewayOnHit) {
    auto provider = make_scripted_provider({{MatchKind::contains, "Movie: Heat\nPlot:", " cat and mouse chase\n2. professional bank heist", {}}});
    Gateway gateway(provider);
    AspectCache cache;
    const auto first = extract_aspects(heat(), gateway, fixture_examples(), cache);
    EXPECT_EQ(first.aspects, (Aspects{"cat and mouse chase", "professional bank heist"}));
    EXPECT_EQ(first.source, AspectSource::llm);
    EXPECT_EQ(first.model_id, "Falcon-40b");
    EXPECT_EQ(first.template_version, "v1");
    const auto& params = gateway.audit().records()[0].params;
    EXPECT_EQ(params.max_tokens, kAspectMaxTokens);
    EXPECT_EQ(params.stop_sequences, (Aspects{"\nMovie:"}));

    const auto second = extract_aspects(heat(), gateway, fixture_examples(), cache);
    EXPECT_EQ(second.source, AspectSource::cache);
    EXPECT_EQ(second.aspects, first.aspects);
    EXPECT_EQ(second.raw_response, first.raw_response);
    EXPECT_EQ(gateway.calls(), 1u);
}

TEST(ExtractAspects, GenericResponseRetriesOnceThenFails) {
    auto provider = make_scripted_provider({{MatchKind::contains, "Movie: Heat", "drama", {}}});
    Gateway gateway(provider);
    AspectCache cache;
    try {
        extract_aspects(heat(), gateway, fixture_examples(), cache);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::extraction);
        EXPECT_EQ(e.stage(), "aspects");
        EXPECT_NE(std::string(e.what()).find("response 1 = \"drama\""), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("response 2 = \"drama\""), std::string::npos);
    }
    EXPECT_EQ(gateway.calls(), 2u);
    EXPECT_EQ(cache.size(), 0u);
}

TEST(ExtractAspects, GatewayErrorsPropagate) {
    Gateway gateway(make_scripted_provider({}));
    AspectCache cache;
    EXPECT_EQ(code_of([&] { extract_aspects(heat(), gateway, fixture_examples(), cache); }), ErrorCode::no_script);
}
