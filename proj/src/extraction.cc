// Copyright 2026 The thinkbudget Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "thinkbudget/extraction.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <vector>

#include "thinkbudget/error.h"

namespace thinkbudget {
namespace {

constexpr std::string_view kWhitespace = " \t\n\r\f\v";

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return is_digit(c) || is_alpha(c); }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

bool starts_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(0, p.size()) == p;
}

bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Content span of the last well-formed \boxed{...}. Escaped braces inside
// the argument do not count toward depth.
std::optional<Span> last_boxed(std::string_view text) {
  constexpr std::string_view kCmd = "\\boxed";
  std::size_t pos = text.rfind(kCmd);
  while (pos != std::string_view::npos) {
    std::size_t i = pos + kCmd.size();
    while (i < text.size() && text[i] == ' ') ++i;
    if (i < text.size() && text[i] == '{') {
      int depth = 0;
      std::size_t j = i;
      for (; j < text.size(); ++j) {
        const char c = text[j];
        if (c == '\\' && j + 1 < text.size()) {
          ++j;
          continue;
        }
        if (c == '{') ++depth;
        if (c == '}' && --depth == 0) break;
      }
      std::optional<Span> span;
      if (j < text.size()) {
        span = Span{i + 1, j};
      } else if (depth == 1) {
        span = Span{i + 1, text.size()};
      }
      if (span && !trim(text.substr(span->begin, span->end - span->begin)).empty()) {
        return span;
      }
    }
    if (pos == 0) break;
    pos = text.rfind(kCmd, pos - 1);
  }
  return std::nullopt;
}

// A number lexeme: optional sign, optional '$', digits with optional
// comma-grouped thousands, optional fractional part.
struct NumberLexeme {
  std::size_t begin = 0;
  std::size_t end = 0;
};

bool sign_allowed_after(char prev) {
  return !(is_alnum(prev) || prev == ')' || prev == ']' || prev == '}' || prev == '.');
}

// Tries to read a lexeme whose first digit is at `d`. Returns the end offset.
std::size_t scan_digits_from(std::string_view text, std::size_t d) {
  std::size_t i = d;
  while (i < text.size() && is_digit(text[i])) ++i;
  const std::size_t run = i - d;
  if (run <= 3) {
    while (i + 3 < text.size() && text[i] == ',' && is_digit(text[i + 1]) &&
           is_digit(text[i + 2]) && is_digit(text[i + 3]) &&
           !(i + 4 < text.size() && is_digit(text[i + 4]))) {
      i += 4;
    }
  }
  if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1])) {
    i += 1;
    while (i < text.size() && is_digit(text[i])) ++i;
  }
  return i;
}

std::vector<NumberLexeme> number_lexemes(std::string_view text) {
  std::vector<NumberLexeme> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    const bool digit_start = is_digit(c) && (i == 0 || !is_digit(text[i - 1]));
    const bool dot_start = c == '.' && i + 1 < text.size() && is_digit(text[i + 1]) &&
                           (i == 0 || !is_digit(text[i - 1]));
    if (!digit_start && !dot_start) {
      ++i;
      continue;
    }
    std::size_t end;
    if (dot_start) {
      end = i + 1;
      while (end < text.size() && is_digit(text[end])) ++end;
    } else {
      end = scan_digits_from(text, i);
    }
    std::size_t begin = i;
    if (begin > 0 && text[begin - 1] == '$') --begin;
    if (begin > 0 && text[begin - 1] == '-' &&
        (begin == 1 || sign_allowed_after(text[begin - 2]))) {
      --begin;
    }
    out.push_back({begin, end});
    i = end;
  }
  return out;
}

// Lexeme starting exactly at offset 0 of `s`, if any.
std::optional<std::size_t> leading_number(std::string_view s) {
  std::size_t d = 0;
  if (d < s.size() && s[d] == '-') ++d;
  if (d < s.size() && s[d] == '$') ++d;
  if (d >= s.size() || !is_digit(s[d])) return std::nullopt;
  return scan_digits_from(s, d);
}

// Value following a marker: the rest of the line, cut to a leading number
// when the line starts with one; surrounding $...$ is kept for normalization.
std::optional<Span> marker_value(std::string_view text, std::size_t from) {
  std::size_t eol = text.find('\n', from);
  if (eol == std::string_view::npos) eol = text.size();
  std::size_t b = from;
  while (b < eol && (text[b] == ' ' || text[b] == '\t')) ++b;
  std::size_t e = eol;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  if (b >= e) return std::nullopt;
  const std::string_view line = text.substr(b, e - b);
  if (auto n = leading_number(line)) {
    // Keep a simple fraction a/b whole.
    std::size_t end = *n;
    if (end + 1 < line.size() && line[end] == '/' && is_digit(line[end + 1])) {
      end += 1;
      while (end < line.size() && is_digit(line[end])) ++end;
    }
    return Span{b, b + end};
  }
  if (line[0] == '$') {
    const auto close = line.find('$', 1);
    if (close != std::string_view::npos && close > 1) return Span{b, b + close + 1};
  }
  return Span{b, e};
}

std::optional<Span> last_gsm8k_marker(std::string_view text) {
  std::size_t pos = text.rfind("####");
  while (pos != std::string_view::npos) {
    std::size_t from = pos + 4;
    while (from < text.size() && text[from] == '#') ++from;
    if (auto v = marker_value(text, from)) return v;
    if (pos == 0) break;
    pos = text.rfind("####", pos - 1);
  }
  return std::nullopt;
}

std::optional<Span> last_final_answer(std::string_view text) {
  constexpr std::string_view kPhrase = "final answer";
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t pos = lower.rfind(kPhrase);
  while (pos != std::string::npos) {
    std::size_t i = pos + kPhrase.size();
    auto skip_blank = [&] {
      while (i < lower.size() && (lower[i] == ' ' || lower[i] == '\t')) ++i;
    };
    skip_blank();
    if (i < lower.size() && lower[i] == ':') ++i;
    skip_blank();
    if (lower.compare(i, 2, "is") == 0 && (i + 2 == lower.size() || !is_alpha(lower[i + 2]))) {
      i += 2;
      skip_blank();
      if (i < lower.size() && lower[i] == ':') ++i;
    }
    if (auto v = marker_value(text, i)) return v;
    if (pos == 0) break;
    pos = lower.rfind(kPhrase, pos - 1);
  }
  return std::nullopt;
}

ExtractedAnswer make_answer(std::string_view text, Span span, ExtractionMethod method) {
  ExtractedAnswer a;
  a.raw_span = std::string(text.substr(span.begin, span.end - span.begin));
  a.value = normalize_answer(a.raw_span);
  a.method = method;
  if (a.value->empty()) return ExtractedAnswer{};
  return a;
}

// ---- normalization -------------------------------------------------------

std::string strip_wrappers(std::string_view s) {
  s = trim(s);
  for (;;) {
    if (s.size() >= 4 && starts_with(s, "$$") && ends_with(s, "$$")) {
      s = trim(s.substr(2, s.size() - 4));
    } else if (s.size() >= 2 && s.front() == '$' && s.back() == '$' &&
               s.find('$', 1) == s.size() - 1) {
      s = trim(s.substr(1, s.size() - 2));
    } else if (s.size() >= 4 && ((starts_with(s, "\\(") && ends_with(s, "\\)")) ||
                                 (starts_with(s, "\\[") && ends_with(s, "\\]")))) {
      s = trim(s.substr(2, s.size() - 4));
    } else {
      break;
    }
  }
  return std::string(s);
}

std::string remove_spacing_commands(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == ',' || n == ';' || n == ':' || n == '!' || n == ' ') {
        i += 2;
        continue;
      }
      for (std::string_view word : {std::string_view("qquad"), std::string_view("quad")}) {
        if (s.compare(i + 1, word.size(), word) == 0 &&
            (i + 1 + word.size() == s.size() || !is_alpha(s[i + 1 + word.size()]))) {
          i += 1 + word.size();
          goto next;
        }
      }
    }
    out.push_back(s[i]);
    ++i;
  next:;
  }
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_digit);
}

// ^[-+]?\d{1,3}(,\d{3})+(\.\d+)?$ with commas removed, else nullopt.
std::optional<std::string> strip_thousands(std::string_view s) {
  std::string t;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) t.push_back(s[i++]);
  const std::size_t int_end = std::min(s.find('.', i), s.size());
  const std::string_view ip = s.substr(i, int_end - i);
  if (ip.find(',') == std::string_view::npos) return std::nullopt;
  std::size_t first = ip.find(',');
  if (first == 0 || first > 3 || !all_digits(ip.substr(0, first))) return std::nullopt;
  t.append(ip.substr(0, first));
  std::size_t k = first;
  while (k < ip.size()) {
    if (ip[k] != ',' || k + 4 > ip.size() || !all_digits(ip.substr(k + 1, 3))) return std::nullopt;
    t.append(ip.substr(k + 1, 3));
    k += 4;
  }
  if (int_end < s.size()) {
    const std::string_view frac = s.substr(int_end + 1);
    if (!all_digits(frac)) return std::nullopt;
    t.push_back('.');
    t.append(frac);
  }
  return t;
}

// Integer with at most 18 digits so products fit in __int128 comfortably.
std::optional<std::int64_t> parse_small_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s) || s.size() > 18) return std::nullopt;
  std::int64_t v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return neg ? -v : v;
}

// Sign and digits with leading zeros dropped, "-0" folded to "0".
std::optional<std::string> canonical_integer(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (!all_digits(s)) return std::nullopt;
  const auto nz = s.find_first_not_of('0');
  if (nz == std::string_view::npos) return std::string("0");
  return (neg ? "-" : "") + std::string(s.substr(nz));
}

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool latex = false;
};

// a/b, \frac{a}{b}, \dfrac{a}{b}, \tfrac{a}{b}, with an optional leading '-'.
std::optional<Fraction> parse_fraction(std::string_view s) {
  bool neg = false;
  if (!s.empty() && s[0] == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  Fraction f;
  std::optional<std::int64_t> a, b;
  for (std::string_view cmd : {"\\frac{", "\\dfrac{", "\\tfrac{"}) {
    if (starts_with(s, cmd) && s.back() == '}') {
      const std::string_view body = s.substr(cmd.size(), s.size() - cmd.size() - 1);
      const auto mid = body.find("}{");
      if (mid == std::string_view::npos) return std::nullopt;
      a = parse_small_int(body.substr(0, mid));
      b = parse_small_int(body.substr(mid + 2));
      f.latex = true;
      break;
    }
  }
  if (!f.latex) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos || s.find('/', slash + 1) != std::string_view::npos) {
      return std::nullopt;
    }
    a = parse_small_int(s.substr(0, slash));
    b = parse_small_int(s.substr(slash + 1));
  }
  if (!a || !b || *b == 0) return std::nullopt;
  f.num = neg ? -*a : *a;
  f.den = *b;
  if (f.den < 0) {
    f.num = -f.num;
    f.den = -f.den;
  }
  return f;
}

std::string render_fraction(Fraction f) {
  const std::int64_t g = std::gcd(f.num < 0 ? -f.num : f.num, f.den);
  if (g > 1) {
    f.num /= g;
    f.den /= g;
  }
  if (f.den == 1) return std::to_string(f.num);
  const std::string sign = f.num < 0 ? "-" : "";
  const std::int64_t n = f.num < 0 ? -f.num : f.num;
  if (f.latex) return sign + "\\frac{" + std::to_string(n) + "}{" + std::to_string(f.den) + "}";
  return sign + std::to_string(n) + "/" + std::to_string(f.den);
}

std::string normalize_pass(std::string_view raw) {
  std::string s = strip_wrappers(raw);
  s = std::string(trim(remove_spacing_commands(s)));
  while (!s.empty() && s.back() == '.') {
    s.pop_back();
    s = std::string(trim(s));
  }
  // Leading currency symbol on a number.
  {
    const std::size_t d = (!s.empty() && s[0] == '-') ? 1 : 0;
    if (s.size() > d + 1 && s[d] == '$' && is_digit(s[d + 1])) s.erase(d, 1);
  }
  {
    std::string t = s;
    for (std::size_t p; (p = t.find("{,}")) != std::string::npos;) t.replace(p, 3, ",");
    if (auto stripped = strip_thousands(t)) s = *stripped;
  }
  if (auto f = parse_fraction(s)) s = render_fraction(*f);
  return s;
}

struct NumericValue {
  double value = 0.0;
  std::optional<Fraction> exact;
};

std::optional<NumericValue> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (auto f = parse_fraction(s)) {
    return NumericValue{static_cast<double>(f->num) / static_cast<double>(f->den), f};
  }
  if (auto i = parse_small_int(s)) {
    return NumericValue{static_cast<double>(*i), Fraction{*i, 1, false}};
  }
  // Plain decimal: [-+]?(\d+)?(\.\d*)? with at least one digit.
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') ++i;
  std::size_t digits = 0;
  bool dot = false;
  for (; i < s.size(); ++i) {
    if (is_digit(s[i])) {
      ++digits;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (digits == 0) return std::nullopt;
  const std::string buf(s);
  return NumericValue{std::strtod(buf.c_str(), nullptr), std::nullopt};
}

}  // namespace

ExtractedAnswer extract_answer(std::string_view text, AnswerConvention convention,
                               bool gold_is_numeric) {
  if (auto s = last_boxed(text)) {
    auto a = make_answer(text, *s, ExtractionMethod::kBoxed);
    if (a.found()) return a;
  }
  if (auto s = last_gsm8k_marker(text)) {
    auto a = make_answer(text, *s, ExtractionMethod::kGsm8kMarker);
    if (a.found()) return a;
  }
  if (auto s = last_final_answer(text)) {
    auto a = make_answer(text, *s, ExtractionMethod::kFinalAnswerPhrase);
    if (a.found()) return a;
  }
  if (convention == AnswerConvention::kLatexMath && !gold_is_numeric) return {};
  const auto lexemes = number_lexemes(text);
  if (!lexemes.empty()) {
    const auto& n = lexemes.back();
    return make_answer(text, {n.begin, n.end}, ExtractionMethod::kLastNumber);
  }
  return {};
}

bool has_final_marker(std::string_view text) {
  return last_boxed(text) || last_gsm8k_marker(text) || last_final_answer(text);
}

std::string normalize_answer(std::string_view raw) {
  // Iterate to a fixpoint so idempotence does not depend on rule ordering.
  std::string cur = normalize_pass(raw);
  for (int i = 0; i < 16; ++i) {
    std::string next = normalize_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

std::optional<double> parse_numeric(std::string_view s) {
  if (auto n = parse_number(s)) return n->value;
  return std::nullopt;
}

bool answers_equivalent(std::string_view a, std::string_view b) {
  if (a == b) return true;
  const auto x = parse_number(a);
  const auto y = parse_number(b);
  if (!x || !y) return false;
  // Integers too long for the exact path still compare exactly.
  if (auto ia = canonical_integer(a), ib = canonical_integer(b); ia && ib) return *ia == *ib;
  if (x->exact && y->exact) {
    return static_cast<__int128>(x->exact->num) * y->exact->den ==
           static_cast<__int128>(y->exact->num) * x->exact->den;
  }
  const double scale = std::max(std::fabs(x->value), std::fabs(y->value));
  return std::fabs(x->value - y->value) <= 1e-9 * scale;
}

StopSignal detect_natural_stop(std::int64_t tokens_generated, std::int64_t budget,
                               double strict_threshold) {
  if (budget < 1) throw InvalidArgument("budget must be >= 1");
  if (tokens_generated < 0) throw InvalidArgument("tokens_generated must be >= 0");
  if (tokens_generated > budget) {
    throw InvalidArgument("tokens_generated " + std::to_string(tokens_generated) +
                          " exceeds budget " + std::to_string(budget));
  }
  if (!(strict_threshold > 0.0 && strict_threshold <= 1.0)) {
    throw InvalidArgument("strict_threshold must be in (0, 1]");
  }
  StopSignal s;
  s.tokens_generated = tokens_generated;
  s.budget = budget;
  s.stop_reason = tokens_generated < budget ? StopReason::kNatural : StopReason::kBudgetHit;
  s.strict_natural = static_cast<double>(tokens_generated) <
                     strict_threshold * static_cast<double>(budget);
  s.strict_threshold = strict_threshold;
  return s;
}

namespace {
constexpr std::array<std::pair<ExtractionMethod, const char*>, 5> kMethodNames{{
    {ExtractionMethod::kBoxed, "boxed"},
    {ExtractionMethod::kGsm8kMarker, "gsm8k_marker"},
    {ExtractionMethod::kFinalAnswerPhrase, "final_answer_phrase"},
    {ExtractionMethod::kLastNumber, "last_number"},
    {ExtractionMethod::kNone, "none"},
}};
}  // namespace

const char* to_string(ExtractionMethod m) {
  for (const auto& [k, v] : kMethodNames) {
    if (k == m) return v;
  }
  return "none";
}

ExtractionMethod extraction_method_from_string(std::string_view s) {
  for (const auto& [k, v] : kMethodNames) {
    if (s == v) return k;
  }
  throw DataError("unknown extraction method: " + std::string(s));
}

const char* to_string(StopReason r) {
  return r == StopReason::kNatural ? "natural" : "budget_hit";
}

StopReason stop_reason_from_string(std::string_view s) {
  if (s == "natural") return StopReason::kNatural;
  if (s == "budget_hit") return StopReason::kBudgetHit;
  throw DataError("unknown stop reason: " + std::string(s));
}

const char* to_string(AnswerConvention c) {
  return c == AnswerConvention::kNumeric ? "numeric" : "latex_math";
}

AnswerConvention answer_convention_from_string(std::string_view s) {
  if (s == "numeric") return AnswerConvention::kNumeric;
  if (s == "latex_math") return AnswerConvention::kLatexMath;
  throw DataError("unknown answer convention: " + std::string(s));
}

void to_json(nlohmann::json& j, const ExtractedAnswer& a) {
  j = nlohmann::json{{"method", to_string(a.method)}, {"raw_span", a.raw_span}};
  j["value"] = a.value ? nlohmann::json(*a.value) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ExtractedAnswer& a) {
  a.method = extraction_method_from_string(j.at("method").get<std::string>());
  a.raw_span = j.at("raw_span").get<std::string>();
  if (j.contains("value") && !j.at("value").is_null()) {
    a.value = j.at("value").get<std::string>();
  } else {
    a.value.reset();
  }
}

void to_json(nlohmann::json& j, const StopSignal& s) {
  j = nlohmann::json{{"tokens_generated", s.tokens_generated},
                     {"budget", s.budget},
                     {"stop_reason", to_string(s.stop_reason)},
                     {"strict_natural", s.strict_natural},
                     {"has_final_marker", s.has_final_marker},
                     {"strict_threshold", s.strict_threshold}};
}

void from_json(const nlohmann::json& j, StopSignal& s) {
  s.tokens_generated = j.at("tokens_generated").get<std::int64_t>();
  s.budget = j.at("budget").get<std::int64_t>();
  s.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
  s.strict_natural = j.at("strict_natural").get<bool>();
  s.has_final_marker = j.at("has_final_marker").get<bool>();
  s.strict_threshold = j.at("strict_threshold").get<double>();
}

}  // namespace thinkbudget
