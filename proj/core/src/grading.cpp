#include "cotscope/grading.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <regex>
#include <vector>

#include "cotscope/errors.hpp"
#include "io.hpp"

namespace cotscope {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// Index of the brace matching the '{' at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

// \cmd{X} -> X for text-like wrappers.
void unwrap_command(std::string& s, std::string_view cmd) {
  std::size_t pos = 0;
  while ((pos = s.find(cmd, pos)) != std::string::npos) {
    std::size_t open = pos + cmd.size();
    while (open < s.size() && s[open] == ' ') ++open;
    if (open >= s.size() || s[open] != '{') {
      pos += cmd.size();
      continue;
    }
    const auto close = matching_brace(s, open);
    if (close == std::string::npos) break;
    std::string inner = s.substr(open + 1, close - open - 1);
    s.replace(pos, close - pos + 1, inner);
  }
}

// \frac{a}{b} -> a/b when both parts are atoms, else (a)/(b).
void rewrite_fracs(std::string& s) {
  std::size_t pos = 0;
  while ((pos = s.find("\\frac", pos)) != std::string::npos) {
    std::size_t a_open = pos + 5;
    if (a_open >= s.size() || s[a_open] != '{') {
      // \frac12 shorthand
      if (a_open + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[a_open])) &&
          std::isdigit(static_cast<unsigned char>(s[a_open + 1]))) {
        std::string rep = std::string(1, s[a_open]) + "/" + s[a_open + 1];
        s.replace(pos, 7, rep);
        continue;
      }
      pos += 5;
      continue;
    }
    const auto a_close = matching_brace(s, a_open);
    if (a_close == std::string::npos || a_close + 1 >= s.size() || s[a_close + 1] != '{') {
      pos += 5;
      continue;
    }
    const auto b_open = a_close + 1;
    const auto b_close = matching_brace(s, b_open);
    if (b_close == std::string::npos) {
      pos += 5;
      continue;
    }
    const std::string a = s.substr(a_open + 1, a_close - a_open - 1);
    const std::string b = s.substr(b_open + 1, b_close - b_open - 1);
    auto atom = [](const std::string& x) {
      return !x.empty() && std::all_of(x.begin(), x.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.';
      });
    };
    std::string rep = (atom(a) ? a : "(" + a + ")") + "/" + (atom(b) ? b : "(" + b + ")");
    s.replace(pos, b_close - pos + 1, rep);
  }
}

__extension__ typedef __int128 i128;

struct Rational {
  i128 num;
  i128 den;
};

i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

std::string to_string128(i128 v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  std::string out;
  while (v != 0) {
    int digit = static_cast<int>(v % 10);
    if (digit < 0) digit = -digit;
    out += static_cast<char>('0' + digit);
    v /= 10;
  }
  if (neg) out += '-';
  std::reverse(out.begin(), out.end());
  return out;
}

// Parses an unsigned digit string into i128; nullopt if it would overflow.
std::optional<i128> parse_digits(std::string_view d) {
  if (d.empty() || d.size() > 36) return std::nullopt;
  i128 v = 0;
  for (char c : d) v = v * 10 + (c - '0');
  return v;
}

std::optional<Rational> parse_decimal(std::string_view s) {
  static const std::regex re(R"(^([+-]?)(\d*)(?:\.(\d*))?$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(s.begin(), s.end(), m, re)) return std::nullopt;
  const std::string sign = m[1].str();
  const std::string whole = m[2].str();
  const std::string frac = m[3].matched ? m[3].str() : std::string();
  if (whole.empty() && frac.empty()) return std::nullopt;
  const std::string digits = (whole.empty() ? "0" : whole) + frac;
  auto num = parse_digits(digits);
  if (!num || frac.size() > 30) return std::nullopt;
  i128 den = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
  Rational r{sign == "-" ? -*num : *num, den};
  return r;
}

std::optional<Rational> parse_rational(std::string s) {
  // Thousands separators: 1,234,567
  static const std::regex thousands(R"(^[+-]?\d{1,3}(,\d{3})+(\.\d*)?$)");
  if (std::regex_match(s, thousands)) s.erase(std::remove(s.begin(), s.end(), ','), s.end());

  // Strip one layer of redundant parentheses around each side of a slash.
  auto strip_parens = [](std::string x) {
    while (x.size() >= 2 && x.front() == '(' && x.back() == ')') x = x.substr(1, x.size() - 2);
    return x;
  };
  s = strip_parens(s);
  const auto slash = s.find('/');
  std::optional<Rational> r;
  if (slash == std::string::npos) {
    r = parse_decimal(s);
  } else {
    auto a = parse_decimal(strip_parens(s.substr(0, slash)));
    std::string rhs = strip_parens(s.substr(slash + 1));
    auto b = parse_decimal(rhs);
    if (!a || !b || b->num == 0) return std::nullopt;
    // (a.num/a.den) / (b.num/b.den)
    r = Rational{a->num * b->den, a->den * b->num};
  }
  if (!r) return std::nullopt;
  if (r->den < 0) {
    r->den = -r->den;
    r->num = -r->num;
  }
  const i128 g = gcd128(r->num, r->den);
  if (g > 1) {
    r->num /= g;
    r->den /= g;
  }
  return r;
}

std::string render(const Rational& r) {
  if (r.den == 1) return to_string128(r.num);
  return to_string128(r.num) + "/" + to_string128(r.den);
}

GradeResult finish(std::optional<std::string> extracted, const std::string& gold_canonical) {
  GradeResult g;
  if (!extracted) {
    g.unparsed = true;
    return g;
  }
  g.extracted = *extracted;
  g.correct = g.extracted == gold_canonical;
  return g;
}

bool is_upper_letter(char c) { return c >= 'A' && c <= 'Z'; }

}  // namespace

std::optional<std::string> last_boxed(std::string_view text) {
  std::optional<std::string> found;
  std::size_t found_pos = 0;
  for (std::string_view cmd : {std::string_view("\\boxed"), std::string_view("\\fbox")}) {
    std::size_t pos = 0;
    while ((pos = text.find(cmd, pos)) != std::string_view::npos) {
      std::size_t open = pos + cmd.size();
      while (open < text.size() && text[open] == ' ') ++open;
      if (open < text.size() && text[open] == '{') {
        const auto close = matching_brace(text, open);
        if (close != std::string_view::npos && (!found || pos >= found_pos)) {
          found = std::string(text.substr(open + 1, close - open - 1));
          found_pos = pos;
        }
      }
      pos += cmd.size();
    }
  }
  return found;
}

std::string normalize_answer(std::string_view answer) {
  std::string s(trim(answer));
  // Math-mode delimiters.
  for (auto [open, close] : {std::pair{"$$", "$$"}, std::pair{"$", "$"}, std::pair{"\\(", "\\)"},
                             std::pair{"\\[", "\\]"}}) {
    const std::string_view o(open), c(close);
    if (s.size() >= o.size() + c.size() && starts_with(s, o) &&
        std::string_view(s).substr(s.size() - c.size()) == c) {
      s = std::string(trim(std::string_view(s).substr(o.size(), s.size() - o.size() - c.size())));
    }
  }
  for (std::string_view cmd : {"\\text", "\\textbf", "\\mathrm", "\\mathbf", "\\mbox", "\\boxed"}) {
    unwrap_command(s, cmd);
  }
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  for (std::string_view junk : {"\\left", "\\right", "\\!", "\\,", "\\;", "\\:", "\\ ", "^\\circ",
                                "^{\\circ}", "\xC2\xB0", "\\displaystyle"}) {
    replace_all(s, junk, "");
  }
  replace_all(s, "~", "");
  rewrite_fracs(s);
  std::string compact;
  compact.reserve(s.size());
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
  }
  // Trailing sentence punctuation is never part of an answer.
  while (!compact.empty() && (compact.back() == '.' || compact.back() == ',')) compact.pop_back();
  if (auto r = parse_rational(compact)) return render(*r);
  return compact;
}

GradeResult grade_math(const Trace& trace, const Question& question) {
  std::optional<std::string> boxed = last_boxed(trace.final_answer);
  if (!boxed) boxed = last_boxed(trace.cot);
  std::optional<std::string> extracted;
  if (boxed) extracted = normalize_answer(*boxed);
  return finish(extracted, normalize_answer(question.gold_answer));
}

std::optional<char> extract_choice_letter(std::string_view text, std::size_t n_choices) {
  const char max_letter = static_cast<char>('A' + std::clamp<std::size_t>(n_choices == 0 ? 10 : n_choices, 1, 26) - 1);
  auto valid = [&](char c) { return is_upper_letter(c) && c <= max_letter; };
  const std::string s(text);

  auto last_match = [&](const std::regex& re, bool allow_lower) -> std::optional<char> {
    std::optional<char> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      char c = (*it)[1].str()[0];
      if (allow_lower) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (valid(c)) out = c;
    }
    return out;
  };

  static const std::regex correct_paren(R"([Cc]orrect [Aa]nswer is:?\s*\*{0,2}\(\s*([A-Za-z])\s*\))");
  static const std::regex correct_bare(R"([Cc]orrect [Aa]nswer is:?\s*\*{0,2}([A-Z])(?![A-Za-z0-9]))");
  static const std::regex answer_paren(R"([Aa]nswer is:?\s*\*{0,2}\(\s*([A-Za-z])\s*\))");
  if (auto c = last_match(correct_paren, true)) return c;
  if (auto c = last_match(correct_bare, false)) return c;
  if (auto c = last_match(answer_paren, true)) return c;

  // Last non-empty line, last standalone capital letter.
  std::string_view rest = trim(text);
  if (rest.empty()) return std::nullopt;
  const auto nl = rest.find_last_of('\n');
  const std::string last_line(nl == std::string_view::npos ? rest : rest.substr(nl + 1));
  static const std::regex standalone(R"((?:^|[^A-Za-z0-9])([A-Z])(?![A-Za-z0-9]))");
  std::optional<char> out;
  for (auto it = std::sregex_iterator(last_line.begin(), last_line.end(), standalone);
       it != std::sregex_iterator(); ++it) {
    const char c = (*it)[1].str()[0];
    if (valid(c)) out = c;
  }
  return out;
}

char gold_choice_letter(const Question& question) {
  std::string g(trim(question.gold_answer));
  if (g.size() == 3 && g.front() == '(' && g.back() == ')') g = g.substr(1, 1);
  if (g.size() == 1 && is_upper_letter(g[0])) return g[0];
  for (std::size_t i = 0; i < question.choices.size(); ++i) {
    if (trim(question.choices[i]) == g) return static_cast<char>('A' + i);
  }
  throw ValidationError("question " + question.id + ": gold answer is not an option letter or choice");
}

GradeResult grade_multiple_choice(const Trace& trace, const Question& question) {
  const char gold = gold_choice_letter(question);
  auto letter = extract_choice_letter(trace.final_answer, question.choices.size());
  if (!letter && trim(trace.final_answer).empty())
    letter = extract_choice_letter(trace.cot, question.choices.size());
  std::optional<std::string> extracted;
  if (letter) extracted = std::string(1, *letter);
  return finish(extracted, std::string(1, gold));
}

GradeResult grade(const Trace& trace, const Question& question) {
  return question.multiple_choice() ? grade_multiple_choice(trace, question) : grade_math(trace, question);
}

GradeResult grade_text(std::string_view response, std::string_view cot_fallback, const Question& question) {
  Trace t;
  t.final_answer = std::string(response);
  t.cot = std::string(cot_fallback);
  return grade(t, question);
}

std::string answer_bucket(std::string_view response, const Question& question) {
  if (question.multiple_choice()) {
    auto letter = extract_choice_letter(response, question.choices.size());
    if (!letter) {
      // Elicited answers often start directly with the option: "(C) because ..."
      static const std::regex lead(R"(^\s*\(?\s*([A-Z])\s*[\).:]?(?![A-Za-z0-9]))");
      std::smatch m;
      const std::string s(response);
      if (std::regex_search(s, m, lead)) {
        const char c = m[1].str()[0];
        if (static_cast<std::size_t>(c - 'A') < std::max<std::size_t>(question.choices.size(), 1)) letter = c;
      }
    }
    return letter ? std::string(1, *letter) : std::string("unparsed");
  }
  if (auto boxed = last_boxed(response)) {
    auto n = normalize_answer(*boxed);
    return n.empty() ? std::string("unparsed") : n;
  }
  // Otherwise the first line, minus trailing sentence punctuation.
  std::string_view r = trim(response);
  const auto nl = r.find('\n');
  if (nl != std::string_view::npos) r = trim(r.substr(0, nl));
  while (!r.empty() && (r.back() == '.' || r.back() == '!')) r.remove_suffix(1);
  auto n = normalize_answer(r);
  return n.empty() ? std::string("unparsed") : n;
}

void grade_corpus(Corpus& corpus) {
  std::size_t unparsed = 0;
  for (auto& t : corpus.mutable_traces()) {
    const auto g = grade(t, corpus.question(t.question_id));
    t.correct = g.correct;
    t.unparsed = g.unparsed;
    if (g.unparsed) ++unparsed;
  }
  const auto n = corpus.traces().size();
  corpus.provenance["grading.unparsed_count"] = std::to_string(unparsed);
  corpus.provenance["grading.unparsed_rate"] =
      io::format_double(n == 0 ? 0.0 : static_cast<double>(unparsed) / static_cast<double>(n), 6);
}

std::string render_prompt(const Question& question) {
  if (question.multiple_choice()) {
    std::string choices;
    for (std::size_t i = 0; i < question.choices.size(); ++i) {
      choices += "(" + std::string(1, static_cast<char>('A' + i)) + ") " + question.choices[i];
      if (i + 1 < question.choices.size()) choices += "\n";
    }
    return "What is the correct answer to this question: \n" + question.prompt + " \n" + choices +
           " \nFormat your response as follows: \"The correct answer is (insert answer here)\".";
  }
  return "Solve the following math problem efficiently and clearly. Please reason step by step, and "
         "put your final answer within $\\boxed{answer}$.\nWhere [answer] is just the final number or "
         "expression that solves the problem.\nProblem: " +
         question.prompt;
}

}  // namespace cotscope
