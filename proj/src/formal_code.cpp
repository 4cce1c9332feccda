#include "verify/formal_code.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <set>

namespace verify::formal {

namespace {

// Decodes one UTF-8 code point at `i`; returns {codepoint, byte length}.
std::pair<uint32_t, size_t> decode(std::string_view s, size_t i) {
  const auto c0 = static_cast<unsigned char>(s[i]);
  if (c0 < 0x80) return {c0, 1};
  size_t len = (c0 >> 5) == 0x6 ? 2 : (c0 >> 4) == 0xE ? 3 : (c0 >> 3) == 0x1E ? 4 : 1;
  if (i + len > s.size()) return {c0, 1};
  uint32_t cp = len == 2 ? (c0 & 0x1F) : len == 3 ? (c0 & 0x0F) : (c0 & 0x07);
  for (size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
  return {cp, len};
}

bool is_greek_letter(uint32_t cp) {
  return cp >= 0x391 && cp <= 0x3C9 && cp != 0x3BB && cp != 0x3A0 && cp != 0x3A3;
}

bool is_ident_start(uint32_t cp) {
  return (cp < 0x80 && (std::isalpha(static_cast<int>(cp)) != 0 || cp == '_')) || is_greek_letter(cp) ||
         (cp >= 0x1D00 && cp <= 0x1D7F) || (cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7);
}

bool is_ident_rest(uint32_t cp) {
  return is_ident_start(cp) || (cp < 0x80 && (std::isdigit(static_cast<int>(cp)) != 0 || cp == '\'' ||
                                              cp == '!' || cp == '?')) ||
         (cp >= 0x2080 && cp <= 0x209C) || (cp >= 0x1D62 && cp <= 0x1D6A);
}

bool is_decl_keyword(const std::string& s) { return s == "theorem" || s == "lemma" || s == "example"; }

std::string normalize_number(std::string n) {
  size_t dot = n.find('.');
  if (dot != std::string::npos) {
    while (!n.empty() && n.back() == '0') n.pop_back();
    if (!n.empty() && n.back() == '.') n.pop_back();
  }
  size_t lead = 0;
  while (lead + 1 < n.size() && n[lead] == '0' && n[lead + 1] != '.') ++lead;
  return n.substr(lead);
}

}  // namespace

std::vector<Token> tokenize(std::string_view code, bool keep_comments) {
  std::vector<Token> out;
  size_t i = 0;
  auto push = [&](Token::Kind k, size_t start, size_t end) {
    if (k == Token::Kind::Comment && !keep_comments) return;
    out.push_back({k, std::string(code.substr(start, end - start)), start, end - start});
  };
  while (i < code.size()) {
    const char c = code[i];
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      ++i;
      continue;
    }
    if (code.compare(i, 2, "--") == 0) {
      size_t e = code.find('\n', i);
      e = e == std::string_view::npos ? code.size() : e;
      push(Token::Kind::Comment, i, e);
      i = e;
      continue;
    }
    if (code.compare(i, 2, "/-") == 0) {
      size_t start = i;
      int depth = 0;
      while (i < code.size()) {
        if (code.compare(i, 2, "/-") == 0) {
          ++depth;
          i += 2;
        } else if (code.compare(i, 2, "-/") == 0) {
          --depth;
          i += 2;
          if (depth == 0) break;
        } else {
          ++i;
        }
      }
      push(Token::Kind::Comment, start, i);
      continue;
    }
    if (c == '"') {
      size_t start = i++;
      while (i < code.size() && code[i] != '"') {
        if (code[i] == '\\' && i + 1 < code.size()) ++i;
        ++i;
      }
      i = std::min(code.size(), i + 1);
      push(Token::Kind::String, start, i);
      continue;
    }
    if (c == '\'') {
      // Char literal 'x' or '\n'; a stray apostrophe is a symbol.
      size_t e = std::string_view::npos;
      if (i + 2 < code.size() && code[i + 1] == '\\') {
        e = code.find('\'', i + 2);
      } else if (i + 1 < code.size()) {
        auto [cp, len] = decode(code, i + 1);
        (void)cp;
        if (i + 1 + len < code.size() && code[i + 1 + len] == '\'') e = i + 1 + len;
      }
      if (e != std::string_view::npos && e - i <= 8) {
        push(Token::Kind::Char, i, e + 1);
        i = e + 1;
      } else {
        push(Token::Kind::Symbol, i, i + 1);
        ++i;
      }
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
      size_t start = i;
      while (i < code.size() && std::isdigit(static_cast<unsigned char>(code[i])) != 0) ++i;
      if (i + 1 < code.size() && code[i] == '.' && std::isdigit(static_cast<unsigned char>(code[i + 1])) != 0) {
        ++i;
        while (i < code.size() && std::isdigit(static_cast<unsigned char>(code[i])) != 0) ++i;
      }
      push(Token::Kind::Number, start, i);
      continue;
    }
    auto [cp, len] = decode(code, i);
    if (is_ident_start(cp) || code.compare(i, 2, "«") == 0) {
      size_t start = i;
      if (code.compare(i, 2, "«") == 0) {
        size_t e = code.find("»", i);
        i = e == std::string_view::npos ? code.size() : e + std::string_view("»").size();
      } else {
        i += len;
      }
      while (i < code.size()) {
        auto [cp2, len2] = decode(code, i);
        if (is_ident_rest(cp2)) {
          i += len2;
        } else if (cp2 == '.' && i + 1 < code.size() && is_ident_start(decode(code, i + 1).first)) {
          i += 1;
        } else {
          break;
        }
      }
      push(Token::Kind::Ident, start, i);
      continue;
    }
    if (code.compare(i, 2, ":=") == 0) {
      push(Token::Kind::Symbol, i, i + 2);
      i += 2;
      continue;
    }
    push(Token::Kind::Symbol, i, i + len);
    i += len;
  }
  return out;
}

const std::vector<std::string>& default_incomplete_markers() {
  static const std::vector<std::string> markers = {"sorry", "admit", "sorryAx"};
  return markers;
}

bool contains_incomplete_marker(std::string_view code, const std::vector<std::string>& markers) {
  for (const auto& t : tokenize(code)) {
    if (t.kind != Token::Kind::Ident) continue;
    if (std::find(markers.begin(), markers.end(), t.text) != markers.end()) return true;
  }
  return false;
}

std::vector<Declaration> declarations(std::string_view code) {
  const auto toks = tokenize(code);
  std::vector<size_t> starts;
  for (size_t k = 0; k < toks.size(); ++k) {
    if (toks[k].kind == Token::Kind::Ident && is_decl_keyword(toks[k].text)) starts.push_back(k);
  }
  std::vector<Declaration> out;
  for (size_t d = 0; d < starts.size(); ++d) {
    const size_t k0 = starts[d];
    const size_t k_end = d + 1 < starts.size() ? starts[d + 1] : toks.size();
    const size_t text_end = d + 1 < starts.size() ? toks[k_end].offset : code.size();
    Declaration decl;
    decl.keyword = toks[k0].text;
    decl.start = toks[k0].offset;
    if (decl.keyword != "example" && k0 + 1 < k_end && toks[k0 + 1].kind == Token::Kind::Ident) {
      decl.name = toks[k0 + 1].text;
      decl.name_offset = toks[k0 + 1].offset;
      decl.name_length = toks[k0 + 1].length;
    }
    int depth = 0;
    std::optional<size_t> assign;
    for (size_t k = k0 + 1; k < k_end; ++k) {
      const auto& t = toks[k].text;
      if (toks[k].kind != Token::Kind::Symbol) continue;
      if (t == "(" || t == "[" || t == "{" || t == "⟨") ++depth;
      if ((t == ")" || t == "]" || t == "}" || t == "⟩") && depth > 0) --depth;
      if (t == ":=" && depth == 0) {
        assign = k;
        break;
      }
    }
    if (assign) {
      const auto& a = toks[*assign];
      decl.header = std::string(code.substr(decl.start, a.offset - decl.start));
      std::string body(code.substr(a.offset + a.length, text_end - a.offset - a.length));
      size_t b = 0;
      while (b < body.size() && (body[b] == ' ' || body[b] == '\t')) ++b;
      body = body.substr(b);
      while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back())) != 0) body.pop_back();
      decl.body = body;
    } else {
      decl.header = std::string(code.substr(decl.start, text_end - decl.start));
    }
    while (!decl.header.empty() && std::isspace(static_cast<unsigned char>(decl.header.back())) != 0)
      decl.header.pop_back();
    out.push_back(std::move(decl));
  }
  return out;
}

std::optional<Declaration> first_declaration(std::string_view code) {
  auto all = declarations(code);
  if (all.empty()) return std::nullopt;
  return all.front();
}

std::optional<std::string> statement_header(std::string_view code, const std::string& name) {
  auto decl = first_declaration(code);
  if (!decl) return std::nullopt;
  if (decl->keyword == "example") {
    return "theorem " + name + decl->header.substr(std::string("example").size());
  }
  if (decl->name.empty()) return std::nullopt;
  const size_t rel = decl->name_offset - decl->start;
  std::string header = decl->header;
  header.replace(rel, decl->name_length, name);
  if (decl->keyword == "lemma") header.replace(0, 5, "theorem");
  return header;
}

std::string proof_body(std::string_view prover_output) {
  std::string text(prover_output);
  if (auto decl = first_declaration(text); decl && decl->body) return *decl->body;
  // Strip leading blank lines, keep indentation of the first content line.
  size_t b = 0;
  while (b < text.size() && std::isspace(static_cast<unsigned char>(text[b])) != 0) ++b;
  std::string body = text.substr(b);
  while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back())) != 0) body.pop_back();
  if (body.rfind("by", 0) == 0 && (body.size() == 2 || std::isspace(static_cast<unsigned char>(body[2])) != 0))
    return body;
  std::string out = "by";
  size_t pos = 0;
  while (pos <= body.size()) {
    size_t nl = body.find('\n', pos);
    std::string line = body.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    out += "\n  " + line;
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::vector<std::string> numeric_literals(std::string_view code) {
  std::vector<std::string> out;
  for (const auto& t : tokenize(code)) {
    if (t.kind == Token::Kind::Number) out.push_back(normalize_number(t.text));
  }
  return out;
}

std::vector<std::string> numeric_literals_in_text(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    if (std::isdigit(static_cast<unsigned char>(text[i])) == 0) {
      ++i;
      continue;
    }
    // Digits glued to a preceding letter (x1, a_2) belong to an identifier.
    bool glued = i > 0 && (std::isalpha(static_cast<unsigned char>(text[i - 1])) != 0 || text[i - 1] == '_');
    size_t s = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) != 0) ++i;
    if (i + 1 < text.size() && text[i] == '.' && std::isdigit(static_cast<unsigned char>(text[i + 1])) != 0) {
      ++i;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) != 0) ++i;
    }
    if (!glued) out.push_back(normalize_number(std::string(text.substr(s, i - s))));
  }
  return out;
}

bool mentions_identifier(std::string_view code, std::string_view ident) {
  for (const auto& t : tokenize(code)) {
    if (t.kind == Token::Kind::Ident && t.text == ident) return true;
  }
  return false;
}

std::vector<std::string> binder_types(std::string_view header, std::string_view ident) {
  const auto toks = tokenize(header);
  std::vector<std::string> out;
  for (size_t k = 0; k < toks.size(); ++k) {
    const auto& open = toks[k].text;
    if (toks[k].kind != Token::Kind::Symbol || (open != "(" && open != "{" && open != "[")) continue;
    const std::string close = open == "(" ? ")" : open == "{" ? "}" : "]";
    size_t j = k + 1;
    bool found = false;
    while (j < toks.size() && toks[j].kind == Token::Kind::Ident) {
      if (toks[j].text == ident) found = true;
      ++j;
    }
    if (!found || j >= toks.size() || toks[j].text != ":") continue;
    int depth = 0;
    size_t e = j + 1;
    for (; e < toks.size(); ++e) {
      const auto& t = toks[e].text;
      if (t == "(" || t == "{" || t == "[") ++depth;
      if (t == close && depth == 0) break;
      if ((t == ")" || t == "}" || t == "]") && depth > 0) --depth;
    }
    if (e >= toks.size() || j + 1 >= e) continue;
    size_t from = toks[j + 1].offset;
    size_t to = toks[e].offset;
    std::string type(header.substr(from, to - from));
    while (!type.empty() && std::isspace(static_cast<unsigned char>(type.back())) != 0) type.pop_back();
    out.push_back(type);
  }
  return out;
}

}  // namespace verify::formal
