#include "recexplain/templates.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

#include <cctype>

namespace recexplain {

namespace {

bool name_start(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }
bool name_char(char c) { return name_start(c) || std::isdigit(static_cast<unsigned char>(c)); }

constexpr const char* kAspectInstruction =
    "List the key fine-grained aspects of the following movie, in the same style as the examples.";

constexpr const char* kAspectTemplate =
    "{instruction}\n"
    "\n"
    "{examples}"
    "Movie: {title}\n"
    "Plot: {plot}\n"
    "Aspects:\n"
    "1.";

constexpr const char* kZeroShotTemplate =
    "The user has watched the following movies:\n"
    "{history}\n"
    "\n"
    "The following movie is recommended to the user:\n"
    "Title: {title}\n"
    "Plot: {plot}\n"
    "\n"
    "Explain why the user would enjoy the recommended movie.\n"
    "Explanation:";

constexpr const char* kCotTemplate =
    "You will explain a movie recommendation to a user by reasoning in three steps.\n"
    "Step 1: Identify the aspects that the recommended movie shares with the movies the user has watched.\n"
    "Step 2: Relate those shared aspects to the preferences the user has shown through their watching history.\n"
    "Step 3: Write one short, natural explanation addressed to the user as \"you\" that names at least one "
    "movie they have watched.\n"
    "\n"
    "Recommended movie:\n"
    "Title: {title}\n"
    "Plot: {plot}\n"
    "Aspects: {aspects}\n"
    "\n"
    "Movies the user has watched:\n"
    "{watched}";

constexpr const char* kCotStepCue = "Step {n} answer:";

std::string read_template(const std::filesystem::path& path) {
    auto text = read_file(path);
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

}  // namespace

std::string render_template(const std::string& text, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::string missing;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '{' && i + 1 < text.size() && name_start(text[i + 1])) {
            std::size_t j = i + 1;
            while (j < text.size() && name_char(text[j])) ++j;
            if (j < text.size() && text[j] == '}') {
                const std::string name = text.substr(i + 1, j - i - 1);
                if (auto it = values.find(name); it != values.end()) {
                    out += it->second;
                } else {
                    missing += (missing.empty() ? "" : ", ") + name;
                }
                i = j + 1;
                continue;
            }
        }
        out.push_back(text[i++]);
    }
    if (!missing.empty()) throw Error(ErrorCode::contract, "template placeholders without values: " + missing);
    return out;
}

PromptTemplates PromptTemplates::defaults() {
    return {"v1", kAspectInstruction, kAspectTemplate, kZeroShotTemplate, kCotTemplate, kCotStepCue};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir, const std::string& version) {
    auto file = [&](const char* stem) { return dir / (std::string(stem) + "." + version + ".txt"); };
    PromptTemplates t;
    t.version = version;
    t.aspect_instruction = read_template(file("aspect_instruction"));
    t.aspect = read_template(file("aspect_extraction"));
    t.zero_shot = read_template(file("zero_shot"));
    t.cot = read_template(file("cot"));
    t.cot_step = read_template(file("cot_step"));
    return t;
}

void PromptTemplates::save(const std::filesystem::path& dir) const {
    auto file = [&](const char* stem) { return dir / (std::string(stem) + "." + version + ".txt"); };
    write_file_atomic(file("aspect_instruction"), aspect_instruction + "\n");
    write_file_atomic(file("aspect_extraction"), aspect + "\n");
    write_file_atomic(file("zero_shot"), zero_shot + "\n");
    write_file_atomic(file("cot"), cot + "\n");
    write_file_atomic(file("cot_step"), cot_step + "\n");
}

}  // namespace recexplain
