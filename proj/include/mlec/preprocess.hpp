#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mlec/error.hpp"
#include "mlec/unicode.hpp"

namespace mlec {

/// Splits a leading prefix (e.g. the conjunction waw) off words with at least
/// `min_codepoints` codepoints. Tokens containing '_' are textualized
/// emoji/emoticon tokens and are never touched.
struct PrefixRule {
  std::string prefix;          // UTF-8
  std::size_t min_codepoints;  // applies to the whole word, prefix included
};

struct PreprocessConfig {
  /// emoji codepoint sequence (UTF-8) -> Arabic textual token
  std::map<std::string, std::string> emoji_map;
  /// ASCII emoticon -> Arabic textual token
  std::map<std::string, std::string> emoticon_map;
  std::vector<PrefixRule> prefix_rules;

  static PreprocessConfig builtin();
};

/// Normalized tweet text: Arabic letters, underscores and single spaces only.
struct CleanText {
  std::string text;

  bool empty() const { return text.empty(); }
  bool operator==(const CleanText&) const = default;
};

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

/// English and Arabic punctuation -> single space each.
inline std::string replace_punctuation(std::string_view s) {
  auto cps = uni::decode_utf8(s);
  for (char32_t& c : cps) {
    if (uni::is_punct(c)) c = U' ';
  }
  return uni::encode_utf8(cps);
}

/// Mapped emoji and emoticons become their textual token, padded with
/// spaces; unmapped emoji codepoints are dropped (replaced by a space).
/// Matching is longest-first over both maps, so ":))" beats ":)" and
/// multi-codepoint emoji sequences can be mapped as a unit.
inline std::string textualize_emoji(std::string_view s,
                                    const PreprocessConfig& cfg) {
  std::vector<std::pair<std::string_view, std::string_view>> candidates;
  candidates.reserve(cfg.emoticon_map.size() + cfg.emoji_map.size());
  for (const auto& [k, v] : cfg.emoticon_map) candidates.emplace_back(k, v);
  for (const auto& [k, v] : cfg.emoji_map) candidates.emplace_back(k, v);
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) {
              return a.first.size() > b.first.size();
            });

  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    bool matched = false;
    for (const auto& [key, token] : candidates) {
      if (!key.empty() && s.compare(i, key.size(), key) == 0) {
        out.push_back(' ');
        out.append(token);
        out.push_back(' ');
        i += key.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;

    // Decode one codepoint.
    std::size_t len = 1;
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if ((b0 & 0xE0) == 0xC0) len = 2;
    else if ((b0 & 0xF0) == 0xE0) len = 3;
    else if ((b0 & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    std::string_view unit = s.substr(i, len);

    auto cps = uni::decode_utf8(unit);
    if (cps.size() == 1 && uni::is_emoji(cps[0])) {
      out.push_back(' ');
    } else {
      out.append(unit);
    }
    i += len;
  }
  return out;
}

/// Latin letters, ASCII digits and Arabic-Indic digits -> spaces.
inline std::string strip_foreign(std::string_view s) {
  auto cps = uni::decode_utf8(s);
  for (char32_t& c : cps) {
    if (uni::is_latin_letter(c) || uni::is_ascii_digit(c) ||
        uni::is_arabic_indic_digit(c)) {
      c = U' ';
    }
  }
  return uni::encode_utf8(cps);
}

/// Alef variants -> bare alef, ta marbuta -> ha, alef maqsura -> ya;
/// diacritics and tatweel removed.
inline std::string normalize_arabic(std::string_view s) {
  auto cps = uni::decode_utf8(s);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    switch (c) {
      case 0x0622:  // alef madda
      case 0x0623:  // alef hamza above
      case 0x0625:  // alef hamza below
        out.push_back(0x0627);
        continue;
      case 0x0629:  // ta marbuta
        out.push_back(0x0647);
        continue;
      case 0x0649:  // alef maqsura
        out.push_back(0x064A);
        continue;
      default:
        break;
    }
    if (uni::is_arabic_diacritic(c) || c == uni::kTatweel) continue;
    out.push_back(c);
  }
  return uni::encode_utf8(out);
}

/// Dashes, decorative symbols, backslashes and every other codepoint outside
/// the output alphabet (Arabic letters, underscore, whitespace) -> space.
inline std::string strip_non_arabic(std::string_view s) {
  auto cps = uni::decode_utf8(s);
  for (char32_t& c : cps) {
    if (uni::is_arabic_letter(c) || c == U'_') continue;
    c = U' ';
  }
  return uni::encode_utf8(cps);
}

/// Runs of an identical codepoint collapse to a single occurrence.
inline std::string reduce_repeats(std::string_view s) {
  auto cps = uni::decode_utf8(s);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    if (!out.empty() && out.back() == c) continue;
    out.push_back(c);
  }
  return uni::encode_utf8(out);
}

namespace detail {

inline std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> tokens;
  auto cps = uni::decode_utf8(s);
  std::vector<char32_t> current;
  for (char32_t c : cps) {
    if (uni::is_space_like(c)) {
      if (!current.empty()) {
        tokens.push_back(uni::encode_utf8(current));
        current.clear();
      }
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(uni::encode_utf8(current));
  return tokens;
}

}  // namespace detail

/// Applies the first matching prefix rule per token. Tokens containing '_'
/// (textualized emoji) are exempt.
inline std::string apply_prefix_rules(std::string_view s,
                                      const std::vector<PrefixRule>& rules) {
  auto tokens = detail::whitespace_tokens(s);
  std::string out;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::string& tok = tokens[t];
    if (tok.find('_') == std::string::npos) {
      for (const PrefixRule& rule : rules) {
        if (rule.prefix.empty() || tok.size() <= rule.prefix.size()) continue;
        if (tok.compare(0, rule.prefix.size(), rule.prefix) != 0) continue;
        if (uni::codepoint_length(tok) < rule.min_codepoints) continue;
        tok.insert(rule.prefix.size(), 1, ' ');
        break;
      }
    }
    if (t > 0) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

/// Drops single-codepoint tokens, collapses whitespace runs, trims.
inline std::string cleanup(std::string_view s) {
  auto tokens = detail::whitespace_tokens(s);
  std::string out;
  for (const std::string& tok : tokens) {
    if (uni::codepoint_length(tok) < 2) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

/// Full normalization pipeline, stages in fixed order. An empty result is
/// legal; the caller decides whether to drop or keep the row.
inline CleanText pipeline(std::string_view raw, const PreprocessConfig& cfg) {
  std::string s = replace_punctuation(raw);
  s = textualize_emoji(s, cfg);
  s = strip_foreign(s);
  s = normalize_arabic(s);
  s = strip_non_arabic(s);
  s = reduce_repeats(s);
  s = apply_prefix_rules(s, cfg.prefix_rules);
  s = cleanup(s);
  return CleanText{std::move(s)};
}

// ---------------------------------------------------------------------------
// Symbol maps
// ---------------------------------------------------------------------------

/// Loads a two-column TSV (symbol<TAB>token, UTF-8) into a map.
inline std::map<std::string, std::string> load_symbol_map(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open symbol map: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 &&
        static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB &&
        static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(line_no, "expected symbol<TAB>token");
    }
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

inline PreprocessConfig PreprocessConfig::builtin() {
  PreprocessConfig cfg;
  // Minimal built-in emoji dictionary covering the common emotional symbols.
  static const std::pair<const char*, const char*> kEmoji[] = {
      {"\U0001F600", "وجه_مبتسم"},       {"\U0001F603", "وجه_فرحان"},
      {"\U0001F604", "وجه_ضاحك"},        {"\U0001F601", "ابتسامه_عريضه"},
      {"\U0001F606", "ضحك_مغمض"},        {"\U0001F605", "ابتسامه_مع_عرق"},
      {"\U0001F923", "ضحك_متدحرج"},      {"\U0001F602", "دموع_الفرح"},
      {"\U0001F642", "ابتسامه_خفيفه"},   {"\U0001F609", "غمزه"},
      {"\U0001F60A", "وجه_مسرور"},       {"\U0001F607", "وجه_ملائكي"},
      {"\U0001F970", "وجه_محب"},         {"\U0001F60D", "عيون_قلوب"},
      {"\U0001F618", "قبله_بقلب"},       {"\U0001F60B", "وجه_لذيذ"},
      {"\U0001F61C", "وجه_يغمز_بلسان"},  {"\U0001F914", "وجه_مفكر"},
      {"\U0001F610", "وجه_محايد"},       {"\U0001F644", "تدوير_عينين"},
      {"\U0001F60C", "وجه_مرتاح"},       {"\U0001F634", "وجه_نايم"},
      {"\U0001F637", "وجه_بكمامه"},      {"\U0001F615", "وجه_مشوش"},
      {"\U0001F641", "وجه_مقطب"},        {"☹", "وجه_عابس"},
      {"\U0001F62E", "وجه_متفاجئ"},      {"\U0001F633", "وجه_محرج"},
      {"\U0001F622", "وجه_يبكي"},        {"\U0001F62D", "بكاء_شديد"},
      {"\U0001F631", "وجه_مصدوم"},       {"\U0001F616", "وجه_مرتبك"},
      {"\U0001F61E", "وجه_خايب"},        {"\U0001F614", "وجه_حزين"},
      {"\U0001F624", "وجه_زفير"},        {"\U0001F621", "وجه_محتقن"},
      {"\U0001F620", "وجه_غاضب"},        {"\U0001F92C", "وجه_شاتم"},
      {"\U0001F628", "وجه_خائف"},        {"\U0001F630", "وجه_قلق"},
      {"\U0001F625", "وجه_متنهد"},       {"\U0001F613", "وجه_متعب"},
      {"❤", "قلب_احمر"},            {"\U0001F494", "قلب_مكسور"},
      {"\U0001F495", "قلبان"},           {"\U0001F496", "قلب_لامع"},
      {"\U0001F44D", "اعجاب"},           {"\U0001F44E", "عدم_اعجاب"},
      {"\U0001F64F", "تضرع"},            {"\U0001F4AA", "قوه"},
      {"\U0001F525", "لهب"},             {"⭐", "نجمه"},
      {"✨", "بريق"},                {"\U0001F339", "ورده"},
      {"\U0001F389", "احتفال"},          {"\U0001F63B", "قط_معجب"},
  };
  for (const auto& [k, v] : kEmoji) cfg.emoji_map.emplace(k, v);

  static const std::pair<const char*, const char*> kEmoticons[] = {
      {":)", "وجه_مبتسم"},  {":-)", "وجه_مبتسم"}, {":))", "وجه_مبتسم"},
      {":(", "وجه_حزين"},   {":-(", "وجه_حزين"},  {":((", "وجه_حزين"},
      {":D", "وجه_ضاحك"},   {":-D", "وجه_ضاحك"},  {";)", "غمزه"},
      {";-)", "غمزه"},      {":P", "وجه_يغمز_بلسان"}, {":O", "وجه_متفاجئ"},
      {":o", "وجه_متفاجئ"}, {":'(", "وجه_يبكي"},  {"<3", "قلب_احمر"},
      {"xD", "ضحك_مغمض"},   {"XD", "ضحك_مغمض"},   {":|", "وجه_محايد"},
      {":/", "وجه_مشوش"},   {":*", "قبله_بقلب"},
  };
  for (const auto& [k, v] : kEmoticons) cfg.emoticon_map.emplace(k, v);

  // Leading conjunction waw split off words of >= 4 codepoints. The glyph
  // and threshold are configurable; this is the shipped default.
  cfg.prefix_rules.push_back(PrefixRule{"و", 4});
  return cfg;
}

}  // namespace mlec
