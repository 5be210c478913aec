#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "twon/error.hpp"

namespace twon::text {

namespace detail {

inline icu::UnicodeString nfc_unicode(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::Data, "ICU NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString out = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw InputError("NFC normalization failed");
  return out;
}

inline std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

}  // namespace detail

inline std::string nfc(std::string_view utf8) {
  return detail::to_utf8(detail::nfc_unicode(utf8));
}

/// Whitespace tokenization after NFC normalization. Any Unicode White_Space
/// code point separates tokens; empty tokens are never produced.
inline std::vector<std::string> tokenize(std::string_view utf8) {
  const icu::UnicodeString u = detail::nfc_unicode(utf8);
  std::vector<std::string> tokens;
  int32_t start = -1;
  int32_t i = 0;
  while (i < u.length()) {
    const UChar32 c = u.char32At(i);
    const int32_t width = U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      if (start >= 0) {
        tokens.push_back(detail::to_utf8(icu::UnicodeString(u, start, i - start)));
        start = -1;
      }
    } else if (start < 0) {
      start = i;
    }
    i += width;
  }
  if (start >= 0) tokens.push_back(detail::to_utf8(icu::UnicodeString(u, start)));
  return tokens;
}

/// Number of Unicode code points after NFC normalization.
inline std::size_t char_count(std::string_view utf8) {
  const icu::UnicodeString u = detail::nfc_unicode(utf8);
  return static_cast<std::size_t>(u.countChar32());
}

/// Full Unicode case folding (NFC in, NFC out).
inline std::string fold_case(std::string_view utf8) {
  icu::UnicodeString u = detail::nfc_unicode(utf8);
  u.foldCase();
  return detail::to_utf8(u);
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace twon::text
