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

#include <random>
#include <regex>
#include <string>
#include <vector>

#include "doctest.h"
#include "thinkbudget/error.h"

using namespace thinkbudget;

namespace {

std::string random_word(std::mt19937_64& rng) {
  static const std::vector<std::string> kWords = {"the", "so", "then", "we", "add", "apples",
                                                  "gives", "total", "of", "step", "left", "x"};
  return kWords[rng() % kWords.size()];
}

std::string random_number(std::mt19937_64& rng) {
  std::string s = std::to_string(rng() % 100000);
  if (rng() % 3 == 0) s += "." + std::to_string(rng() % 100);
  return s;
}

}  // namespace

TEST_CASE("extract_answer levels") {
  SUBCASE("boxed") {
    const auto a = extract_answer("so \\boxed{42} done");
    CHECK(a.method == ExtractionMethod::kBoxed);
    CHECK(a.value == "42");
    CHECK(a.raw_span == "42");
  }
  SUBCASE("gsm8k marker") {
    const auto a = extract_answer("She has 3 left.\n#### 18");
    CHECK(a.method == ExtractionMethod::kGsm8kMarker);
    CHECK(a.value == "18");
  }
  SUBCASE("final answer phrase") {
    const auto a = extract_answer("Computing 3 + 4.\nFinal Answer: 7\nthanks 9");
    CHECK(a.method == ExtractionMethod::kFinalAnswerPhrase);
    CHECK(a.value == "7");
    CHECK(extract_answer("the final answer is 1,250.").value == "1250");
    CHECK(extract_answer("#### 3/6").value == "1/2");
    CHECK(extract_answer("Final answer: 10/4 apples").value == "5/2");
  }
  SUBCASE("last number") {
    const auto a = extract_answer("step 3 gives 7, then 12 and we run out of");
    CHECK(a.method == ExtractionMethod::kLastNumber);
    CHECK(a.value == "12");
  }
  SUBCASE("empty") {
    const auto a = extract_answer("");
    CHECK(a.method == ExtractionMethod::kNone);
    CHECK_FALSE(a.value.has_value());
    CHECK_FALSE(a.found());
  }
  SUBCASE("nested braces keep the whole argument") {
    const auto a = extract_answer("\\boxed{\\frac{2}{4}}");
    CHECK(a.method == ExtractionMethod::kBoxed);
    CHECK(a.raw_span == "\\frac{2}{4}");
    CHECK(a.value == "\\frac{1}{2}");
  }
  SUBCASE("one unclosed brace at end of text is accepted") {
    const auto a = extract_answer("we conclude \\boxed{128");
    CHECK(a.method == ExtractionMethod::kBoxed);
    CHECK(a.value == "128");
  }
  SUBCASE("deeper truncation falls through") {
    const auto a = extract_answer("so \\boxed{\\frac{3}{4");
    CHECK(a.method == ExtractionMethod::kLastNumber);
    CHECK(a.value == "4");
  }
  SUBCASE("last of several markers wins") {
    CHECK(extract_answer("#### 5\nwait\n#### 6").value == "6");
    CHECK(extract_answer("\\boxed{1} and \\boxed{2}").value == "2");
  }
  SUBCASE("latex convention skips bare numbers only for non-numeric golds") {
    const std::string text = "the area is 12 so";
    CHECK(extract_answer(text, AnswerConvention::kLatexMath, false).method ==
          ExtractionMethod::kNone);
    CHECK(extract_answer(text, AnswerConvention::kLatexMath, true).value == "12");
  }
}

TEST_CASE("last-number level agrees with a regex scan") {
  // Oracle: every plain decimal literal, keep the last one.
  const std::regex literal(R"(\d+(\.\d+)?)");
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 500; ++iter) {
    std::string text;
    const int tokens = 1 + static_cast<int>(rng() % 12);
    for (int t = 0; t < tokens; ++t) {
      text += (rng() % 2 ? random_word(rng) : random_number(rng));
      text += (rng() % 4 == 0 ? ", " : " ");
    }
    std::string last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), literal);
         it != std::sregex_iterator(); ++it) {
      last = it->str();
    }
    const auto a = extract_answer(text);
    if (last.empty()) {
      CHECK(a.method == ExtractionMethod::kNone);
    } else {
      CHECK(a.method == ExtractionMethod::kLastNumber);
      CHECK(answers_equivalent(*a.value, normalize_answer(last)));
    }
  }
}

TEST_CASE("last-number lexeme details") {
  CHECK(extract_answer("it costs $1,234.50 total").value == "1234.50");
  CHECK(extract_answer("balance is -17 now").value == "-17");
  CHECK(extract_answer("range 3-17").value == "17");
  CHECK(extract_answer("about .5 of it").value == ".5");
  CHECK(extract_answer("codes 12,34").value == "34");
}

TEST_CASE("level precedence on composite texts") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 200; ++iter) {
    const bool boxed = rng() % 2, marker = rng() % 2, phrase = rng() % 2;
    std::vector<std::string> parts = {"noise " + random_number(rng)};
    if (boxed) parts.push_back("\\boxed{101}");
    if (marker) parts.push_back("#### 202");
    if (phrase) parts.push_back("Final answer: 303");
    std::shuffle(parts.begin(), parts.end(), rng);
    std::string text;
    for (const auto& p : parts) text += p + "\n";
    text += "trailing 404";
    const auto a = extract_answer(text);
    if (boxed) {
      CHECK(a.method == ExtractionMethod::kBoxed);
      CHECK(a.value == "101");
    } else if (marker) {
      CHECK(a.method == ExtractionMethod::kGsm8kMarker);
      CHECK(a.value == "202");
    } else if (phrase) {
      CHECK(a.method == ExtractionMethod::kFinalAnswerPhrase);
      CHECK(a.value == "303");
    } else {
      CHECK(a.method == ExtractionMethod::kLastNumber);
      CHECK(a.value == "404");
    }
  }
}

TEST_CASE("normalize_answer") {
  CHECK(normalize_answer("1,234.") == "1234");
  CHECK(normalize_answer(" \\frac{2}{4} ") == "\\frac{1}{2}");
  CHECK(normalize_answer("x") == "x");
  CHECK(normalize_answer("6/8") == "3/4");
  CHECK(normalize_answer("\\dfrac{10}{5}") == "2");
  CHECK(normalize_answer("$42$") == "42");
  CHECK(normalize_answer("1{,}000") == "1000");
  CHECK(normalize_answer("3\\,000") == "3000");
}

TEST_CASE("normalize_answer is idempotent on a fuzz corpus") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> atoms = {"1", "2", "0", "9", ",", ".", "/", " ", "$", "-",
                                          "\\frac", "{", "}", "\\,", "x", "\\dfrac", "\\(", "\\)",
                                          "{,}", "\\quad", "000", "12"};
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const int len = static_cast<int>(rng() % 10);
    for (int k = 0; k < len; ++k) s += atoms[rng() % atoms.size()];
    const std::string once = normalize_answer(s);
    CHECK_MESSAGE(normalize_answer(once) == once, "input: " << s);
  }
}

TEST_CASE("answers_equivalent") {
  CHECK(answers_equivalent("0.5", "1/2"));
  CHECK(answers_equivalent("42", "42"));
  CHECK_FALSE(answers_equivalent("42", "43"));
  CHECK(answers_equivalent("\\frac{1}{3}", "1/3"));
  CHECK_FALSE(answers_equivalent("1000000000000000001", "1000000000000000000"));
  CHECK(answers_equivalent("0.1", "0.1000000000001"));
  CHECK_FALSE(answers_equivalent("x", "y"));

  std::mt19937_64 rng(5);
  std::vector<std::string> corpus = {"1/2", "0.5", "2/4", "\\frac{1}{2}", "3", "3.0", "x", "1/3"};
  for (int i = 0; i < 30; ++i) corpus.push_back(std::to_string(rng() % 7));
  for (const auto& a : corpus) {
    CHECK(answers_equivalent(a, a));
    for (const auto& b : corpus) {
      CHECK(answers_equivalent(a, b) == answers_equivalent(b, a));
      for (const auto& c : corpus) {
        if (!parse_numeric(a) || !parse_numeric(b) || !parse_numeric(c)) continue;
        if (answers_equivalent(a, b) && answers_equivalent(b, c)) {
          CHECK(answers_equivalent(a, c));
        }
      }
    }
  }
}

TEST_CASE("detect_natural_stop") {
  auto s = detect_natural_stop(152, 512, 0.95);
  CHECK(s.natural());
  CHECK(s.strict_natural);
  s = detect_natural_stop(512, 512, 0.95);
  CHECK(s.stop_reason == StopReason::kBudgetHit);
  CHECK_FALSE(s.strict_natural);
  s = detect_natural_stop(498, 512, 0.95);
  CHECK(s.natural());
  CHECK_FALSE(s.strict_natural);

  CHECK_THROWS_AS(detect_natural_stop(513, 512), InvalidArgument);
  CHECK_THROWS_AS(detect_natural_stop(1, 0), InvalidArgument);
  CHECK_THROWS_AS(detect_natural_stop(1, 10, 0.0), InvalidArgument);
  CHECK_THROWS_AS(detect_natural_stop(1, 10, 1.5), InvalidArgument);

  // strict => natural; both nonincreasing in tokens.
  for (std::int64_t b : {1, 7, 100, 512}) {
    bool prev_nat = true, prev_strict = true;
    for (std::int64_t t = 0; t <= b; ++t) {
      const auto sig = detect_natural_stop(t, b);
      if (sig.strict_natural) CHECK(sig.natural());
      CHECK((prev_nat || !sig.natural()));
      CHECK((prev_strict || !sig.strict_natural));
      prev_nat = sig.natural();
      prev_strict = sig.strict_natural;
    }
  }
}

TEST_CASE("json round trip") {
  const auto a = extract_answer("#### 18");
  CHECK(nlohmann::json(a).get<ExtractedAnswer>() == a);
  const auto none = extract_answer("");
  CHECK(nlohmann::json(none).get<ExtractedAnswer>() == none);
  const auto s = detect_natural_stop(100, 512);
  CHECK(nlohmann::json(s).get<StopSignal>() == s);
  CHECK(extraction_method_from_string(to_string(ExtractionMethod::kFinalAnswerPhrase)) ==
        ExtractionMethod::kFinalAnswerPhrase);
}
