#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace recexplain {

// Replaces each `{name}` (name = [a-z_][a-z0-9_]*) with its value in one pass;
// substituted text is never rescanned. Other braces are copied through.
// Throws Error{contract} naming any placeholder without a value.
std::string render_template(const std::string& text, const std::map<std::string, std::string>& values);

// Prompt templates, versioned together. Changing any text means a new version;
// the version is part of the aspect cache key.
struct PromptTemplates {
    std::string version;
    std::string aspect_instruction;
    std::string aspect;     // {instruction} {examples} {title} {plot}
    std::string zero_shot;  // {history} {title} {plot}
    std::string cot;        // {title} {plot} {aspects} {watched}
    std::string cot_step;   // {n}: cue that opens step n's answer

    static PromptTemplates defaults();

    // Reads aspect_instruction.<v>.txt, aspect_extraction.<v>.txt,
    // zero_shot.<v>.txt, cot.<v>.txt and cot_step.<v>.txt from `dir`. One
    // trailing newline per file is dropped.
    static PromptTemplates load(const std::filesystem::path& dir, const std::string& version);

    // Writes the files `load` reads.
    void save(const std::filesystem::path& dir) const;
};

}  // namespace recexplain
