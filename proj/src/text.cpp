#include "mpcal/text.hpp"

#include <array>
#include <cctype>

namespace mpcal::text {
namespace {

bool IsSpace(unsigned char c) { return std::isspace(c) != 0; }
bool IsDigit(char c) { return c >= '0' && c <= '9'; }

// Digits with optional thousands commas, optional fraction. `pos` points at
// the first digit. Returns the end of the match. Commas are only taken when
// followed by exactly three digits.
std::size_t ScanNumberBody(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  while (i < s.size() && IsDigit(s[i])) ++i;
  while (i + 3 < s.size() && s[i] == ',' && IsDigit(s[i + 1]) && IsDigit(s[i + 2]) &&
         IsDigit(s[i + 3]) && (i + 4 >= s.size() || !IsDigit(s[i + 4]))) {
    i += 4;
  }
  if (i + 1 < s.size() && s[i] == '.' && IsDigit(s[i + 1])) {
    ++i;
    while (i < s.size() && IsDigit(s[i])) ++i;
  }
  return i;
}

}  // namespace

std::string_view Trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && IsSpace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && IsSpace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string ToLowerAscii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string NormalizeAnswer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    if (IsSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  static constexpr std::array<std::string_view, 3> kArticles = {"a ", "an ", "the "};
  for (std::string_view article : kArticles) {
    if (out.starts_with(article)) {
      out.erase(0, article.size());
      break;
    }
  }
  return out;
}

bool ContainsTokenBounded(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    bool left_ok = pos == 0 || haystack[pos - 1] == ' ';
    std::size_t end = pos + needle.size();
    bool right_ok = end == haystack.size() || haystack[end] == ' ';
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::optional<std::string> CanonicalDecimal(std::string_view s) {
  s = Trim(s);
  if (s.empty()) return std::nullopt;
  bool negative = false;
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') {
    negative = s[0] == '-';
    i = 1;
  }
  if (i >= s.size() || !IsDigit(s[i])) return std::nullopt;
  if (ScanNumberBody(s, i) != s.size()) return std::nullopt;

  std::string integer;
  std::string fraction;
  bool in_fraction = false;
  for (; i < s.size(); ++i) {
    if (s[i] == ',') continue;
    if (s[i] == '.') {
      in_fraction = true;
      continue;
    }
    (in_fraction ? fraction : integer).push_back(s[i]);
  }
  std::size_t nz = integer.find_first_not_of('0');
  integer = nz == std::string::npos ? "0" : integer.substr(nz);
  while (!fraction.empty() && fraction.back() == '0') fraction.pop_back();
  std::string out = integer;
  if (!fraction.empty()) out += "." + fraction;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

std::optional<std::string> LastNumber(std::string_view s) {
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!IsDigit(s[i]) || (i > 0 && (IsDigit(s[i - 1]) || s[i - 1] == '.'))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (i > 0 && s[i - 1] == '-' && (i == 1 || !std::isalnum(static_cast<unsigned char>(s[i - 2])))) {
      start = i - 1;
    }
    std::size_t end = ScanNumberBody(s, i);
    last = CanonicalDecimal(s.substr(start, end - start));
    i = end;
  }
  return last;
}

}  // namespace mpcal::text
