#pragma once

// Lexical helpers for proof-assistant source text (Lean 4 surface syntax):
// comment/string-aware tokenization, declaration splitting, and detection of
// incomplete-proof markers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace verify::formal {

struct Token {
  enum class Kind { Ident, Number, Symbol, String, Char, Comment };
  Kind kind;
  std::string text;
  size_t offset = 0;
  size_t length = 0;
};

std::vector<Token> tokenize(std::string_view code, bool keep_comments = false);

const std::vector<std::string>& default_incomplete_markers();

// True iff a marker identifier appears outside comments and string literals.
bool contains_incomplete_marker(std::string_view code,
                                const std::vector<std::string>& markers = default_incomplete_markers());

struct Declaration {
  std::string keyword;  // theorem | lemma | example
  std::string name;     // empty for `example`
  size_t start = 0;     // offset of the keyword
  size_t name_offset = 0;
  size_t name_length = 0;
  std::string header;               // keyword .. type, without `:=`
  std::optional<std::string> body;  // text after the top-level `:=`
};

std::vector<Declaration> declarations(std::string_view code);
std::optional<Declaration> first_declaration(std::string_view code);

// Header of the first declaration, renamed (an `example` becomes a theorem).
// Returns nullopt when the code contains no declaration.
std::optional<std::string> statement_header(std::string_view code, const std::string& name);

// Turns prover output (full declaration, `by` block, or bare tactics) into a
// proof term usable after `:=`.
std::string proof_body(std::string_view prover_output);

// Numeric literal tokens, normalized ("3.50" -> "3.5", "007" -> "7").
std::vector<std::string> numeric_literals(std::string_view code);
// Same normalization for natural-language text.
std::vector<std::string> numeric_literals_in_text(std::string_view text);

bool mentions_identifier(std::string_view code, std::string_view ident);

// Binder types declared for `ident` in a header, e.g. "(x y : ℤ)" -> {"ℤ"}.
std::vector<std::string> binder_types(std::string_view header, std::string_view ident);

}  // namespace verify::formal
