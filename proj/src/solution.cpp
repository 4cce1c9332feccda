#include "verify/solution.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <unordered_map>

namespace verify {

namespace {

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '_';
}

bool is_hspace(char c) { return c == ' ' || c == '\t' || c == '\r'; }

const std::set<std::string>& logical_keywords() {
  static const std::set<std::string> kw = {"and",  "or",      "not",    "if",
                                           "then", "else",    "iff",    "implies",
                                           "forall", "exists", "true", "false"};
  return kw;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

bool has_relation(std::string_view s) {
  static const char* kRel[] = {"=", "<", ">", "≤", "≥", "≠", "≡", "∣"};
  for (const char* r : kRel) {
    if (s.find(r) != std::string_view::npos) return true;
  }
  return false;
}

std::pair<int, int> line_col(std::string_view text, size_t pos) {
  int line = 1;
  int col = 1;
  for (size_t i = 0; i < pos && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Blank out <think>...</think> spans while keeping offsets stable.
std::string strip_think_blocks(std::string_view text) {
  std::string out(text);
  size_t pos = 0;
  while ((pos = out.find("<think>", pos)) != std::string::npos) {
    size_t end = out.find("</think>", pos);
    size_t stop = end == std::string::npos ? out.size() : end + 8;
    for (size_t i = pos; i < stop; ++i) {
      if (out[i] != '\n') out[i] = ' ';
    }
    pos = stop;
  }
  return out;
}

enum class MarkerKind { Variables, Lemma, Premises, Conclusion, Goal };

struct Marker {
  MarkerKind kind;
  int number = 0;
  size_t start = 0;
  size_t content_start = 0;
};

bool is_decoration(char c) { return c == '*' || c == '#' || c == '-' || c == '_' || c == '>'; }

std::vector<Marker> find_markers(std::string_view text) {
  struct Kw {
    std::string_view word;
    MarkerKind kind;
  };
  static const Kw kKeywords[] = {
      {"variables", MarkerKind::Variables}, {"premises", MarkerKind::Premises},
      {"premise", MarkerKind::Premises},    {"conclusion", MarkerKind::Conclusion},
      {"lemma", MarkerKind::Lemma},         {"goal", MarkerKind::Goal},
  };

  std::vector<Marker> markers;
  size_t i = 0;
  while (i < text.size()) {
    if (std::isalpha(static_cast<unsigned char>(text[i])) == 0 ||
        (i > 0 && is_word_char(text[i - 1]))) {
      ++i;
      continue;
    }
    size_t k = i;
    while (k > 0 && (is_hspace(text[k - 1]) || is_decoration(text[k - 1]))) --k;
    bool anchored = k == 0 || text[k - 1] == '\n' || text[k - 1] == ';' ||
                    (!markers.empty() && k == markers.back().content_start);
    if (!anchored) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& kw : kKeywords) {
      if (!starts_with_icase(text.substr(i), kw.word)) continue;
      size_t p = i + kw.word.size();
      if (p < text.size() && is_word_char(text[p]) && kw.kind != MarkerKind::Lemma) continue;
      int number = 0;
      if (kw.kind == MarkerKind::Lemma) {
        while (p < text.size() && is_hspace(text[p])) ++p;
        size_t digits = p;
        while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p])) != 0) ++p;
        if (p == digits) continue;
        number = std::stoi(std::string(text.substr(digits, p - digits)));
      }
      while (p < text.size() && (is_hspace(text[p]) || text[p] == '*')) ++p;
      if (p >= text.size() || text[p] != ':') continue;
      markers.push_back({kw.kind, number, i, p + 1});
      i = p + 1;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return markers;
}

std::string clean_segment(std::string_view seg) {
  size_t b = 0;
  size_t e = seg.size();
  while (b < e && (std::isspace(static_cast<unsigned char>(seg[b])) != 0 || seg[b] == '*')) ++b;
  while (e > b && (std::isspace(static_cast<unsigned char>(seg[e - 1])) != 0 ||
                   is_decoration(seg[e - 1])))
    --e;
  return std::string(seg.substr(b, e - b));
}

std::string first_paragraph(std::string_view seg) {
  auto lines = split_lines(seg);
  std::string out;
  bool started = false;
  for (const auto& l : lines) {
    std::string t = trim(l);
    if (t.empty()) {
      if (started) break;
      continue;
    }
    started = true;
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  while (!out.empty() && (out.back() == ';' || out.back() == '*')) out.pop_back();
  return trim(out);
}

std::vector<std::string> split_items(std::string_view seg, bool split_commas) {
  std::vector<std::string> items;
  std::string cur;
  int depth = 0;
  auto flush = [&] {
    std::string t = trim(cur);
    if (!t.empty()) items.push_back(t);
    cur.clear();
  };
  for (char c : seg) {
    if (c == '(' || c == '[' || c == '{') ++depth;
    if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    if (c == '\n' || c == ';' || (split_commas && c == ',' && depth == 0)) {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return items;
}

std::string strip_bullet(const std::string& item) {
  std::string s = item;
  if (s.rfind("• ", 0) == 0) return trim(s.substr(std::string("• ").size()));
  if (s.size() >= 2 && (s[0] == '-' || s[0] == '*') && s[1] == ' ') return trim(s.substr(2));
  size_t p = 0;
  while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p])) != 0) ++p;
  if (p > 0 && p + 1 < s.size() && (s[p] == '.' || s[p] == ')') && s[p + 1] == ' ')
    return trim(s.substr(p + 2));
  return s;
}

bool is_none_item(const std::string& item) {
  const std::string l = to_lower(item);
  return l == "none" || l == "(none)" || l == "∅" || l == "-" || l == "n/a" || l == "nothing";
}

}  // namespace

// ---------------------------------------------------------------------------

json to_json(const ProblemStatement& p) {
  json j = {{"id", p.id}, {"text", p.text}};
  if (p.answer) j["answer"] = *p.answer;
  if (p.trusted_goal) j["trusted_goal"] = *p.trusted_goal;
  if (p.label) j["label"] = *p.label;
  if (!p.givens.empty()) j["givens"] = p.givens;
  return j;
}

ProblemStatement problem_from_json(const json& j) {
  ProblemStatement p;
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "problem must be a JSON object");
  p.id = j.value("id", "");
  p.text = j.value("text", "");
  if (p.id.empty()) throw Error(ErrorCode::InvalidArgument, "problem id must be nonempty");
  if (p.text.empty()) throw Error(ErrorCode::InvalidArgument, "problem text must be nonempty");
  if (j.contains("answer") && !j["answer"].is_null()) {
    p.answer = j["answer"].is_string() ? j["answer"].get<std::string>() : j["answer"].dump();
  }
  if (j.contains("trusted_goal") && j["trusted_goal"].is_string())
    p.trusted_goal = j["trusted_goal"].get<std::string>();
  if (j.contains("label") && j["label"].is_boolean()) p.label = j["label"].get<bool>();
  if (j.contains("givens") && j["givens"].is_array())
    p.givens = j["givens"].get<std::vector<std::string>>();
  return p;
}

std::string_view to_string(VarType t) {
  switch (t) {
    case VarType::Integer: return "integer";
    case VarType::Rational: return "rational";
    case VarType::Real: return "real";
    case VarType::Natural: return "natural";
    case VarType::Boolean: return "boolean";
  }
  return "integer";
}

std::string_view to_string(VarOrigin o) {
  return o == VarOrigin::Given ? "given" : "introduced";
}

std::optional<VarType> parse_var_type(std::string_view word) {
  static const std::map<std::string, VarType> kTypes = {
      {"integer", VarType::Integer},   {"integers", VarType::Integer},
      {"int", VarType::Integer},       {"ℤ", VarType::Integer},
      {"z", VarType::Integer},         {"rational", VarType::Rational},
      {"rationals", VarType::Rational}, {"ℚ", VarType::Rational},
      {"q", VarType::Rational},        {"real", VarType::Real},
      {"reals", VarType::Real},        {"real number", VarType::Real},
      {"ℝ", VarType::Real},            {"r", VarType::Real},
      {"natural", VarType::Natural},   {"natural number", VarType::Natural},
      {"naturals", VarType::Natural},  {"nat", VarType::Natural},
      {"ℕ", VarType::Natural},         {"n", VarType::Natural},
      {"boolean", VarType::Boolean},   {"bool", VarType::Boolean},
      {"prop", VarType::Boolean},
  };
  auto it = kTypes.find(to_lower(collapse_whitespace(word)));
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::string canonical_statement_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      pending_space = true;
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      std::string word(text.substr(i, j - i));
      std::string lower = to_lower(word);
      if (logical_keywords().count(lower) != 0) word = lower;
      if (pending_space && !out.empty() && is_word_char(out.back())) out.push_back(' ');
      out += word;
      i = j;
    } else {
      out.push_back(c);
      ++i;
    }
    pending_space = false;
  }
  while (!out.empty() && (out.back() == '.' || out.back() == ' ')) out.pop_back();
  return out;
}

Statement Statement::make(std::string_view text) {
  Statement s;
  s.text = collapse_whitespace(text);
  s.sid = sha256_hex(canonical_statement_text(s.text)).substr(0, 16);
  return s;
}

std::string_view to_string(ProvenanceKind k) {
  switch (k) {
    case ProvenanceKind::Unknown: return "Unknown";
    case ProvenanceKind::Given: return "Given";
    case ProvenanceKind::Fact: return "Fact";
    case ProvenanceKind::PriorLemma: return "PriorLemma";
  }
  return "Unknown";
}

namespace {

ProvenanceKind provenance_kind_from(std::string_view s) {
  if (s == "Given") return ProvenanceKind::Given;
  if (s == "Fact") return ProvenanceKind::Fact;
  if (s == "PriorLemma") return ProvenanceKind::PriorLemma;
  return ProvenanceKind::Unknown;
}

json statement_json(const Statement& s) { return {{"text", s.text}, {"sid", s.sid}}; }

Statement statement_from(const json& j) {
  if (j.is_string()) return Statement::make(j.get<std::string>());
  return Statement::make(j.value("text", ""));
}

}  // namespace

bool StructuredSolution::same_structure(const StructuredSolution& other) const {
  return problem_id == other.problem_id && variables == other.variables &&
         lemmas == other.lemmas && goal == other.goal;
}

bool StructuredSolution::needs_final_gap_repair() const {
  return lemmas.empty() || lemmas.back().conclusion.sid != goal.sid;
}

json to_json(const StructuredSolution& s) {
  json vars = json::array();
  for (const auto& v : s.variables) {
    vars.push_back({{"name", v.name},
                    {"type", std::string(to_string(v.vartype))},
                    {"origin", std::string(to_string(v.origin))}});
  }
  json lemmas = json::array();
  for (const auto& l : s.lemmas) {
    json premises = json::array();
    for (const auto& p : l.premises) {
      premises.push_back({{"text", p.statement.text},
                          {"sid", p.statement.sid},
                          {"provenance",
                           {{"kind", std::string(to_string(p.provenance.kind))},
                            {"index", p.provenance.index}}}});
    }
    lemmas.push_back({{"index", l.index},
                      {"premises", premises},
                      {"conclusion", statement_json(l.conclusion)}});
  }
  return {{"problem_id", s.problem_id},
          {"variables", vars},
          {"lemmas", lemmas},
          {"goal", statement_json(s.goal)},
          {"raw_text", s.raw_text}};
}

StructuredSolution solution_from_json(const json& j) {
  StructuredSolution s;
  s.problem_id = j.value("problem_id", "");
  s.raw_text = j.value("raw_text", "");
  for (const auto& v : j.value("variables", json::array())) {
    VariableDecl d;
    d.name = v.at("name").get<std::string>();
    auto t = parse_var_type(v.at("type").get<std::string>());
    if (!t) throw Error(ErrorCode::UnknownVariableType, d.name);
    d.vartype = *t;
    d.origin = v.value("origin", "given") == "introduced" ? VarOrigin::Introduced : VarOrigin::Given;
    s.variables.push_back(d);
  }
  for (const auto& lj : j.value("lemmas", json::array())) {
    Lemma l;
    l.index = lj.at("index").get<int>();
    for (const auto& pj : lj.value("premises", json::array())) {
      Premise p;
      p.statement = statement_from(pj);
      if (pj.contains("provenance")) {
        p.provenance.kind = provenance_kind_from(pj["provenance"].value("kind", "Unknown"));
        p.provenance.index = pj["provenance"].value("index", 0);
      }
      l.premises.push_back(p);
    }
    l.conclusion = statement_from(lj.at("conclusion"));
    s.lemmas.push_back(l);
  }
  if (j.contains("goal")) s.goal = statement_from(j["goal"]);
  return s;
}

// ---------------------------------------------------------------------------
// Parsing

ParseError::ParseError(ErrorCode code, int line, int column, std::string detail)
    : Error(code, std::string(to_string(code)) + " at " + std::to_string(line) + ":" +
                      std::to_string(column) + (detail.empty() ? "" : " (" + detail + ")")),
      line_(line),
      column_(column),
      detail_(std::move(detail)) {}

namespace {

struct PendingLemma {
  Lemma lemma;
  size_t pos = 0;
  bool has_conclusion = false;
};

void parse_variables(std::string_view seg, std::string_view text, size_t pos,
                     std::vector<VariableDecl>& out) {
  for (const auto& raw : split_items(seg, false)) {
    std::string item = strip_bullet(raw);
    if (is_none_item(item)) continue;
    size_t colon = item.find(':');
    auto [line, col] = line_col(text, pos);
    if (colon == std::string::npos) throw ParseError(ErrorCode::UnknownVariableType, line, col, item);
    std::string names = trim(item.substr(0, colon));
    std::string rest = to_lower(trim(item.substr(colon + 1)));
    VarOrigin origin = VarOrigin::Given;
    auto take_origin = [&](const std::string& word, VarOrigin o) {
      for (const std::string& form : {"(" + word + ")", word}) {
        size_t p = rest.find(form);
        if (p != std::string::npos) {
          rest.erase(p, form.size());
          origin = o;
          return true;
        }
      }
      return false;
    };
    if (!take_origin("introduced", VarOrigin::Introduced)) take_origin("given", VarOrigin::Given);
    rest = trim(rest);
    while (!rest.empty() && (rest.back() == ',' || rest.back() == '.')) rest.pop_back();
    for (auto& name : split_items(names, true)) {
      auto type = parse_var_type(trim(rest));
      if (!type || name.empty()) throw ParseError(ErrorCode::UnknownVariableType, line, col, name);
      out.push_back({name, *type, origin});
    }
  }
}

void parse_premises(std::string_view seg, std::string_view text, const PendingLemma& current,
                    const std::vector<Lemma>& done, std::vector<Premise>& out) {
  static const std::regex kTag(R"(^\[\s*(GIVEN|FACT|LEMMA\s*([0-9]+))\s*\]\s*)", std::regex::icase);
  for (const auto& raw : split_items(seg, false)) {
    std::string item = strip_bullet(raw);
    if (is_none_item(item)) continue;
    std::vector<Provenance> tags;
    std::smatch m;
    while (std::regex_search(item, m, kTag)) {
      std::string kind = to_lower(m[1].str());
      if (kind == "given") {
        tags.push_back(Provenance::given(0));
      } else if (kind == "fact") {
        tags.push_back(Provenance::fact());
      } else {
        tags.push_back(Provenance::prior_lemma(std::stoi(m[2].str())));
      }
      item = item.substr(static_cast<size_t>(m.length(0)));
    }
    item = trim(item);
    if (!item.empty()) {
      out.push_back({Statement::make(item), tags.empty() ? Provenance{} : tags.front()});
      continue;
    }
    // Bare "[LEMMA j]" citations stand for lemma j's conclusion.
    for (const auto& tag : tags) {
      auto it = std::find_if(done.begin(), done.end(),
                             [&](const Lemma& l) { return l.index == tag.index; });
      if (tag.kind != ProvenanceKind::PriorLemma || it == done.end()) {
        auto [line, col] = line_col(text, current.pos);
        throw ParseError(ErrorCode::MalformedLemmaBlock, line, col,
                         std::to_string(current.lemma.index));
      }
      out.push_back({it->conclusion, tag});
    }
  }
}

}  // namespace

StructuredSolution parse_structured_solution(std::string_view input, std::string problem_id) {
  if (trim(input).empty()) throw ParseError(ErrorCode::NoLemmasFound, 1, 1, "empty text");
  const std::string text = strip_think_blocks(input);
  const auto markers = find_markers(text);

  StructuredSolution sol;
  sol.problem_id = std::move(problem_id);
  sol.raw_text = std::string(input);

  std::optional<PendingLemma> current;
  std::set<int> seen_numbers;
  auto malformed = [&](size_t pos, int index) {
    auto [line, col] = line_col(text, pos);
    return ParseError(ErrorCode::MalformedLemmaBlock, line, col, std::to_string(index));
  };
  auto close_lemma = [&]() {
    if (!current) return;
    if (!current->has_conclusion) throw malformed(current->pos, current->lemma.index);
    sol.lemmas.push_back(std::move(current->lemma));
    current.reset();
  };

  for (size_t mi = 0; mi < markers.size(); ++mi) {
    const Marker& mk = markers[mi];
    const size_t end = mi + 1 < markers.size() ? markers[mi + 1].start : text.size();
    std::string_view seg = std::string_view(text).substr(mk.content_start, end - mk.content_start);
    switch (mk.kind) {
      case MarkerKind::Variables:
        parse_variables(clean_segment(seg), text, mk.start, sol.variables);
        break;
      case MarkerKind::Lemma:
        close_lemma();
        if (!seen_numbers.insert(mk.number).second) throw malformed(mk.start, mk.number);
        current = PendingLemma{};
        current->lemma.index = mk.number;
        current->pos = mk.start;
        break;
      case MarkerKind::Premises:
        if (!current || current->has_conclusion)
          throw malformed(mk.start, current ? current->lemma.index : 0);
        parse_premises(clean_segment(seg), text, *current, sol.lemmas, current->lemma.premises);
        break;
      case MarkerKind::Conclusion: {
        if (!current || current->has_conclusion)
          throw malformed(mk.start, current ? current->lemma.index : 0);
        std::string c = first_paragraph(clean_segment(seg));
        if (c.empty()) throw malformed(mk.start, current->lemma.index);
        current->lemma.conclusion = Statement::make(c);
        current->has_conclusion = true;
        break;
      }
      case MarkerKind::Goal: {
        close_lemma();
        std::string g = first_paragraph(clean_segment(seg));
        if (sol.goal.empty() && !g.empty()) sol.goal = Statement::make(g);
        break;
      }
    }
  }
  close_lemma();

  if (sol.lemmas.empty()) {
    auto [line, col] = line_col(text, text.size());
    throw ParseError(ErrorCode::NoLemmasFound, line, col, "");
  }
  if (sol.goal.empty()) {
    auto [line, col] = line_col(text, text.size());
    throw ParseError(ErrorCode::MissingGoal, line, col, "");
  }
  return sol;
}

std::string to_text(const StructuredSolution& s) {
  std::string out;
  if (!s.variables.empty()) {
    out += "VARIABLES:\n";
    for (const auto& v : s.variables) {
      out += v.name + " : " + std::string(to_string(v.vartype)) + " (" +
             std::string(to_string(v.origin)) + ")\n";
    }
  }
  for (const auto& l : s.lemmas) {
    out += "LEMMA " + std::to_string(l.index) + ":\nPREMISES:\n";
    for (const auto& p : l.premises) {
      switch (p.provenance.kind) {
        case ProvenanceKind::Given: out += "[GIVEN] "; break;
        case ProvenanceKind::Fact: out += "[FACT] "; break;
        case ProvenanceKind::PriorLemma:
          out += "[LEMMA " + std::to_string(p.provenance.index) + "] ";
          break;
        case ProvenanceKind::Unknown: break;
      }
      out += p.statement.text + "\n";
    }
    out += "CONCLUSION: " + l.conclusion.text + "\n";
  }
  out += "GOAL: " + s.goal.text + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

std::vector<RewriteRule> rewrite_rules_from_json(const json& j) {
  std::vector<RewriteRule> rules;
  if (j.is_null()) return rules;
  for (const auto& r : j) {
    rules.push_back({r.at("pattern").get<std::string>(), r.value("replacement", "")});
  }
  return rules;
}

namespace {

// Splits at depth-0 occurrences found by `match`, which returns the length of
// the separator at position i (0 when none).
template <typename Match>
std::vector<std::string> split_depth0(std::string_view s, Match match) {
  std::vector<std::string> parts;
  int depth = 0;
  size_t last = 0;
  size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '(' || c == '[' || c == '{') ++depth;
    if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    size_t len = depth == 0 ? match(s, i) : 0;
    if (len > 0) {
      parts.push_back(trim(s.substr(last, i - last)));
      i += len;
      last = i;
      continue;
    }
    ++i;
  }
  parts.push_back(trim(s.substr(last)));
  parts.erase(std::remove_if(parts.begin(), parts.end(), [](const std::string& p) { return p.empty(); }),
              parts.end());
  return parts;
}

size_t word_at(std::string_view s, size_t i, std::string_view word, bool icase) {
  if (i + word.size() > s.size()) return 0;
  if (i > 0 && is_word_char(s[i - 1])) return 0;
  if (i + word.size() < s.size() && is_word_char(s[i + word.size()])) return 0;
  std::string_view w = s.substr(i, word.size());
  if (icase ? !starts_with_icase(w, word) : w != word) return 0;
  return word.size();
}

}  // namespace

std::vector<std::string> split_top_level_conjunction(std::string_view text) {
  auto strong = split_depth0(text, [](std::string_view s, size_t i) -> size_t {
    if (size_t n = word_at(s, i, "AND", false)) return n;
    if (s.compare(i, 3, "∧") == 0) return 3;
    if (s.compare(i, 2, "/\\") == 0) return 2;
    return 0;
  });
  std::vector<std::string> out;
  for (const auto& part : strong) {
    auto weak = split_depth0(part, [](std::string_view s, size_t i) -> size_t {
      return word_at(s, i, "and", true);
    });
    bool all_relations = weak.size() > 1 &&
                         std::all_of(weak.begin(), weak.end(), [](const std::string& w) { return has_relation(w); });
    if (all_relations) {
      out.insert(out.end(), weak.begin(), weak.end());
    } else {
      out.push_back(part);
    }
  }
  if (out.empty()) out.push_back(trim(text));
  return out;
}

bool is_conditional(std::string_view text) {
  static const std::regex kIff(R"(\bif\s+and\s+only\s+if\b)", std::regex::icase);
  static const std::regex kBranch(R"(\b(if|else|otherwise|unless)\b)", std::regex::icase);
  std::string s = std::regex_replace(std::string(text), kIff, "iff");
  return std::regex_search(s, kBranch);
}

StructuredSolution normalize(const StructuredSolution& input, const NormalizeOptions& opts) {
  StructuredSolution s = input;

  if (!opts.rewrites.empty()) {
    std::vector<std::regex> compiled;
    for (const auto& r : opts.rewrites) compiled.emplace_back(r.pattern);
    auto rewrite = [&](Statement& st) {
      std::string t = st.text;
      for (size_t k = 0; k < compiled.size(); ++k)
        t = std::regex_replace(t, compiled[k], opts.rewrites[k].replacement);
      st = Statement::make(t);
    };
    for (auto& l : s.lemmas) {
      for (auto& p : l.premises) rewrite(p.statement);
      rewrite(l.conclusion);
    }
    rewrite(s.goal);
  }

  // Split premise conjunctions; drop duplicate premises.
  for (auto& l : s.lemmas) {
    std::vector<Premise> premises;
    std::set<std::string> seen;
    for (const auto& p : l.premises) {
      for (const auto& part : split_top_level_conjunction(p.statement.text)) {
        Premise q{Statement::make(part), p.provenance};
        if (seen.insert(q.statement.sid).second) premises.push_back(q);
      }
    }
    l.premises = std::move(premises);
  }

  // Split conclusion conjunctions into sibling lemmas sharing the premises.
  struct Piece {
    int old_index;
    int old_position;
    Lemma lemma;
    bool removed = false;
    std::optional<Provenance> redirect;
  };
  std::vector<Piece> pieces;
  for (size_t pos = 0; pos < s.lemmas.size(); ++pos) {
    const Lemma& l = s.lemmas[pos];
    for (const auto& part : split_top_level_conjunction(l.conclusion.text)) {
      Lemma copy = l;
      copy.conclusion = Statement::make(part);
      pieces.push_back({l.index, static_cast<int>(pos), copy});
    }
  }

  // Tautologies: conclusion restates one of the lemma's own premises.
  for (auto& piece : pieces) {
    for (const auto& p : piece.lemma.premises) {
      if (p.statement.sid == piece.lemma.conclusion.sid) {
        piece.removed = true;
        piece.redirect = p.provenance;
        break;
      }
    }
  }

  std::map<int, int> old_position;  // declared index -> source position
  for (const auto& piece : pieces) old_position.emplace(piece.old_index, piece.old_position);

  std::vector<int> new_index(pieces.size(), 0);
  int next = 1;
  for (size_t k = 0; k < pieces.size(); ++k) {
    if (!pieces[k].removed) new_index[k] = next++;
  }

  // Resolve a citation of declared lemma `j` for a premise with sid `sid`.
  auto resolve = [&](int j, const std::string& sid, int citing_position) {
    std::set<int> visited;
    Provenance target = Provenance::prior_lemma(j);
    bool redirected = false;
    while (target.kind == ProvenanceKind::PriorLemma) {
      int cited = target.index;
      if (!visited.insert(cited).second)
        throw Error(ErrorCode::NormalizationCycle, "cyclic tautology redirect through lemma " + std::to_string(cited));
      std::vector<size_t> parts;
      for (size_t k = 0; k < pieces.size(); ++k)
        if (pieces[k].old_index == cited) parts.push_back(k);
      if (parts.empty()) return target;  // dangling; left for validation
      size_t chosen = parts.back();
      for (size_t k : parts)
        if (pieces[k].lemma.conclusion.sid == sid) chosen = k;
      if (!pieces[chosen].removed) {
        bool was_backward = old_position.at(cited) < citing_position;
        if ((was_backward || redirected) && pieces[chosen].old_position >= citing_position)
          throw Error(ErrorCode::NormalizationCycle,
                      "re-pointing lemma " + std::to_string(j) + " produced a forward reference");
        return Provenance::prior_lemma(new_index[chosen]);
      }
      target = *pieces[chosen].redirect;
      redirected = true;
      if (target.kind == ProvenanceKind::PriorLemma && old_position.count(target.index) != 0 &&
          old_position.at(target.index) >= citing_position)
        throw Error(ErrorCode::NormalizationCycle,
                    "re-pointing lemma " + std::to_string(j) + " produced a forward reference");
    }
    return target;
  };

  std::vector<Lemma> out;
  for (size_t k = 0; k < pieces.size(); ++k) {
    if (pieces[k].removed) continue;
    Lemma l = pieces[k].lemma;
    for (auto& p : l.premises) {
      if (p.provenance.kind == ProvenanceKind::PriorLemma)
        p.provenance = resolve(p.provenance.index, p.statement.sid, pieces[k].old_position);
    }
    l.index = new_index[k];
    out.push_back(std::move(l));
  }
  s.lemmas = std::move(out);
  return s;
}

// ---------------------------------------------------------------------------
// Premise classification

std::vector<Statement> extract_givens(const ProblemStatement& p) {
  std::vector<Statement> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& t) {
    std::string c = trim(t);
    while (!c.empty() && (c.back() == '.' || c.back() == ',')) c.pop_back();
    c = trim(c);
    if (c.empty()) return;
    Statement st = Statement::make(c);
    if (seen.insert(st.sid).second) out.push_back(st);
  };
  if (!p.givens.empty()) {
    for (const auto& g : p.givens) add(g);
    return out;
  }

  std::string text = p.text;
  text.erase(std::remove(text.begin(), text.end(), '$'), text.end());

  auto is_decimal_point = [&](size_t i) {
    return text[i] == '.' && i > 0 && i + 1 < text.size() &&
           std::isdigit(static_cast<unsigned char>(text[i - 1])) != 0 &&
           std::isdigit(static_cast<unsigned char>(text[i + 1])) != 0;
  };

  struct Candidate {
    size_t pos;
    int order;
    std::string text;
  };
  std::vector<Candidate> cands;

  // Math fragments: runs of expression characters containing a relation.
  {
    auto in_run = [&](size_t i, int depth) {
      const unsigned char c = static_cast<unsigned char>(text[i]);
      if (c >= 0x80) return true;
      if (std::isalnum(c) != 0 || c == ' ' || c == '\t') return true;
      if (std::string_view("+-*/^()=<>_%!|").find(static_cast<char>(c)) != std::string_view::npos)
        return true;
      if (c == '.') return is_decimal_point(i);
      if (c == ',') return depth > 0;
      return false;
    };
    size_t i = 0;
    while (i < text.size()) {
      int depth = 0;
      size_t start = i;
      while (i < text.size() && in_run(i, depth)) {
        if (text[i] == '(') ++depth;
        if (text[i] == ')' && depth > 0) --depth;
        ++i;
      }
      if (i > start) {
        std::string run = text.substr(start, i - start);
        if (has_relation(run)) {
          for (const auto& piece : split_top_level_conjunction(run)) {
            // Trim leading/trailing prose words.
            std::string s = trim(piece);
            auto is_prose = [](const std::string& w) {
              static const std::set<std::string> math_words = {"sin", "cos", "tan", "log", "ln", "exp",
                                                               "sqrt", "gcd", "lcm", "mod", "max", "min",
                                                               "floor", "ceil", "abs"};
              return w.size() >= 2 && !math_words.count(w) && std::all_of(w.begin(), w.end(), [](char ch) {
                       return std::isalpha(static_cast<unsigned char>(ch)) != 0;
                     });
            };
            std::vector<std::string> words;
            {
              std::string cur;
              for (char ch : s) {
                if (ch == ' ') {
                  if (!cur.empty()) words.push_back(cur);
                  cur.clear();
                } else {
                  cur.push_back(ch);
                }
              }
              if (!cur.empty()) words.push_back(cur);
            }
            // Prose words split the run; each stretch holding a relation is a candidate.
            std::string frag;
            auto flush = [&] {
              if (has_relation(frag)) cands.push_back({start, 0, frag});
              frag.clear();
            };
            for (const auto& w : words) {
              if (is_prose(w)) {
                flush();
                continue;
              }
              if (!frag.empty()) frag.push_back(' ');
              frag += w;
            }
            flush();
          }
        }
      }
      if (i == start) ++i;
    }
  }

  // Clauses.
  {
    int depth = 0;
    size_t start = 0;
    for (size_t i = 0; i <= text.size(); ++i) {
      bool boundary = i == text.size();
      if (!boundary) {
        const char c = text[i];
        if (c == '(') ++depth;
        if (c == ')' && depth > 0) --depth;
        boundary = c == '\n' || c == ';' || c == '?' || c == '!' ||
                   (c == '.' && !is_decimal_point(i)) || (c == ',' && depth == 0) ||
                   (c == ':' && depth == 0);
      }
      if (boundary) {
        std::string clause = trim(std::string_view(text).substr(start, i - start));
        if (!clause.empty()) cands.push_back({start, 1, clause});
        start = i + 1;
      }
    }
  }

  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.order < b.order;
  });
  for (const auto& c : cands) add(c.text);
  return out;
}

StructuredSolution classify_premises(const StructuredSolution& input, const ProblemStatement& prob) {
  StructuredSolution s = input;
  const auto givens = extract_givens(prob);
  std::unordered_map<std::string, int> given_index;
  for (size_t k = 0; k < givens.size(); ++k) given_index.emplace(givens[k].sid, static_cast<int>(k) + 1);

  std::unordered_map<std::string, int> earlier;  // conclusion sid -> first lemma index
  for (auto& l : s.lemmas) {
    for (auto& p : l.premises) {
      const std::string& sid = p.statement.sid;
      auto g = given_index.find(sid);
      switch (p.provenance.kind) {
        case ProvenanceKind::PriorLemma:
          break;  // honored; validate_structure checks it against lemma j
        case ProvenanceKind::Given:
          p.provenance = g != given_index.end() ? Provenance::given(g->second) : Provenance::given(0);
          break;
        case ProvenanceKind::Fact:
        case ProvenanceKind::Unknown: {
          auto e = earlier.find(sid);
          if (g != given_index.end()) {
            p.provenance = Provenance::given(g->second);
          } else if (e != earlier.end()) {
            p.provenance = Provenance::prior_lemma(e->second);
          } else {
            p.provenance = Provenance::fact();
          }
          break;
        }
      }
    }
    earlier.emplace(l.conclusion.sid, l.index);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::EmptyProof: return "EmptyProof";
    case ViolationKind::NonContiguousIndex: return "NonContiguousIndex";
    case ViolationKind::EmptyConclusion: return "EmptyConclusion";
    case ViolationKind::CompoundConclusion: return "CompoundConclusion";
    case ViolationKind::ConditionalConclusion: return "ConditionalConclusion";
    case ViolationKind::ForwardReference: return "ForwardReference";
    case ViolationKind::DanglingReference: return "DanglingReference";
    case ViolationKind::ProvenanceMismatch: return "ProvenanceMismatch";
    case ViolationKind::MissingGoal: return "MissingGoal";
    case ViolationKind::UndeclaredVariable: return "UndeclaredVariable";
    case ViolationKind::DuplicateVariable: return "DuplicateVariable";
  }
  return "Unknown";
}

json to_json(const Violation& v) {
  return {{"kind", std::string(to_string(v.kind))}, {"at", v.at}, {"cites", v.cites}, {"detail", v.detail}};
}

std::string describe(const Violation& v) {
  std::string s(to_string(v.kind));
  if (v.at != 0) s += " at lemma " + std::to_string(v.at);
  if (v.cites != 0) s += " citing lemma " + std::to_string(v.cites);
  if (!v.detail.empty()) s += ": " + v.detail;
  return s;
}

std::vector<std::string> variable_like_tokens(std::string_view text) {
  static const std::set<std::string> kFunctions = {"gcd", "lcm", "sin", "cos", "tan", "log", "ln",
                                                   "exp", "sqrt", "mod", "max", "min", "abs"};
  auto is_op = [](char c) {
    return static_cast<unsigned char>(c) >= 0x80 ||
           std::string_view("=+-*/^<>()[]|").find(c) != std::string_view::npos ||
           std::isdigit(static_cast<unsigned char>(c)) != 0;
  };
  static const std::regex kVarShape(R"(^[A-Za-z](_?[0-9]+|_[A-Za-z0-9]+)?$)");
  std::vector<std::string> out;
  std::set<std::string> seen;
  size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    std::string tok(text.substr(i, j - i));
    size_t lead = 0;
    while (lead < tok.size() && std::isdigit(static_cast<unsigned char>(tok[lead])) != 0) ++lead;
    bool after_digits = lead > 0;
    std::string ident = tok.substr(lead);
    if (!ident.empty() && std::isalpha(static_cast<unsigned char>(ident[0])) != 0 &&
        std::regex_match(ident, kVarShape) && kFunctions.count(to_lower(ident)) == 0) {
      size_t l = i;
      while (l > 0 && is_hspace(text[l - 1])) --l;
      size_t r = j;
      while (r < text.size() && is_hspace(text[r])) ++r;
      bool math = after_digits || (l > 0 && is_op(text[l - 1])) || (r < text.size() && is_op(text[r]));
      if (math && seen.insert(ident).second) out.push_back(ident);
    }
    i = j;
  }
  return out;
}

std::vector<Violation> validate_structure(const StructuredSolution& s, bool intro_variables) {
  std::vector<Violation> v;
  if (s.lemmas.empty()) v.push_back({ViolationKind::EmptyProof, 0, 0, ""});

  std::map<int, const Lemma*> by_index;
  for (size_t k = 0; k < s.lemmas.size(); ++k) {
    const Lemma& l = s.lemmas[k];
    by_index.emplace(l.index, &l);
    if (l.index != static_cast<int>(k) + 1)
      v.push_back({ViolationKind::NonContiguousIndex, l.index, 0, "expected " + std::to_string(k + 1)});
    if (l.conclusion.empty()) {
      v.push_back({ViolationKind::EmptyConclusion, l.index, 0, ""});
    } else {
      if (split_top_level_conjunction(l.conclusion.text).size() > 1)
        v.push_back({ViolationKind::CompoundConclusion, l.index, 0, l.conclusion.text});
      if (is_conditional(l.conclusion.text))
        v.push_back({ViolationKind::ConditionalConclusion, l.index, 0, l.conclusion.text});
    }
  }
  for (size_t k = 0; k < s.lemmas.size(); ++k) {
    const Lemma& l = s.lemmas[k];
    for (const auto& p : l.premises) {
      if (p.provenance.kind == ProvenanceKind::PriorLemma) {
        const int j = p.provenance.index;
        auto it = by_index.find(j);
        if (j >= l.index) {
          v.push_back({ViolationKind::ForwardReference, l.index, j, ""});
        } else if (it == by_index.end()) {
          v.push_back({ViolationKind::DanglingReference, l.index, j, ""});
        } else if (it->second->conclusion.sid != p.statement.sid) {
          v.push_back({ViolationKind::ProvenanceMismatch, l.index, j,
                       "'" + p.statement.text + "' is not the conclusion of lemma " + std::to_string(j)});
        }
      } else if (p.provenance.kind == ProvenanceKind::Given && p.provenance.index == 0) {
        v.push_back({ViolationKind::ProvenanceMismatch, l.index, 0,
                     "'" + p.statement.text + "' is tagged GIVEN but not in the problem statement"});
      }
    }
  }
  if (s.goal.empty()) v.push_back({ViolationKind::MissingGoal, 0, 0, ""});

  if (intro_variables) {
    std::set<std::string> declared;
    for (const auto& d : s.variables) {
      if (!declared.insert(d.name).second) v.push_back({ViolationKind::DuplicateVariable, 0, 0, d.name});
    }
    std::set<std::string> reported;
    auto scan = [&](const Statement& st, int at) {
      for (const auto& name : variable_like_tokens(st.text)) {
        if (declared.count(name) == 0 && reported.insert(name).second)
          v.push_back({ViolationKind::UndeclaredVariable, at, 0, name});
      }
    };
    for (const auto& l : s.lemmas) {
      for (const auto& p : l.premises) scan(p.statement, l.index);
      scan(l.conclusion, l.index);
    }
    scan(s.goal, 0);
  }
  return v;
}

}  // namespace verify
