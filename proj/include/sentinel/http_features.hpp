#pragma once

// HTTP section of the model input: structural statistics, the request
// complexity score and three attack-indicator flags driven by a versioned
// ruleset.

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/core/digest.hpp"
#include "sentinel/core/error.hpp"
#include "sentinel/core/types.hpp"

namespace sentinel::http {

inline constexpr std::size_t kHttpDims = 12;
inline constexpr int kMaxDecodeRounds = 3;
inline constexpr std::size_t kBodyExcerptBytes = 4096;

inline constexpr std::array<std::string_view, kHttpDims> kHttpFeatureNames = {
    "url_length_norm",   "param_count_norm",    "header_count_norm", "header_complexity",
    "payload_length_norm", "special_char_ratio", "encoding_depth_norm", "method_rarity",
    "complexity_score",  "sqli_flag",           "xss_flag",          "traversal_flag",
};

struct HttpFeatureVector {
  double url_length_norm = 0;
  double param_count_norm = 0;
  double header_count_norm = 0;
  double header_complexity = 0;
  double payload_length_norm = 0;
  double special_char_ratio = 0;
  double encoding_depth_norm = 0;
  double method_rarity = 0;
  double complexity_score = 0;
  double sqli_flag = 0;
  double xss_flag = 0;
  double traversal_flag = 0;

  std::array<double, kHttpDims> to_array() const {
    return {url_length_norm,     param_count_norm,    header_count_norm, header_complexity,
            payload_length_norm, special_char_ratio,  encoding_depth_norm, method_rarity,
            complexity_score,    sqli_flag,           xss_flag,          traversal_flag};
  }

  bool operator==(const HttpFeatureVector&) const = default;
};

// ---------------------------------------------------------------------------
// Decoding

enum class DecodeContext { Path, Query };

struct DecodeResult {
  std::string text;
  int rounds = 0;
};

namespace detail {

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// One RFC 3986 percent-decoding pass. Invalid sequences stay verbatim.
inline bool percent_decode_once(std::string_view in, std::string& out) {
  out.clear();
  out.reserve(in.size());
  bool changed = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '%' && i + 2 < in.size()) {
      int hi = hex_value(in[i + 1]), lo = hex_value(in[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi << 4 | lo));
        i += 2;
        changed = true;
        continue;
      }
    }
    out.push_back(in[i]);
  }
  return changed;
}

}  // namespace detail

/// Percent-decodes up to three rounds, stopping early at a fixed point.
/// In query context a raw `+` means space; that substitution happens once, on
/// the undecoded text, and is not counted as a round.
inline DecodeResult normalize_decode(std::string_view text, DecodeContext ctx = DecodeContext::Path) {
  DecodeResult r;
  r.text.assign(text);
  if (ctx == DecodeContext::Query) std::replace(r.text.begin(), r.text.end(), '+', ' ');
  std::string next;
  while (r.rounds < kMaxDecodeRounds) {
    if (!detail::percent_decode_once(r.text, next)) break;
    r.text.swap(next);
    ++r.rounds;
  }
  return r;
}

inline std::string to_lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ---------------------------------------------------------------------------
// Ruleset

enum class Indicator : std::uint8_t { Sqli, Xss, Traversal };

struct Rule {
  Indicator flag;
  bool is_regex = false;
  std::string pattern;
};

inline constexpr std::string_view kDefaultRulesetText = R"(# HTTP attack indicator rules
# version: 1
# One rule per line: <flag> <literal|regex> <pattern>
# Patterns match decoded, lower-cased path, query and body excerpt.
sqli regex union[\s+/*]+(all[\s+/*]+)?select
sqli regex \bor\s+1\s*=\s*1
sqli regex \bor\s+'1'\s*=\s*'1
sqli literal '--
sqli regex ;\s*drop\s+table
sqli literal sleep(
sqli literal benchmark(
xss literal <script
xss literal javascript:
xss regex (^|[^a-z0-9_])on[a-z]+\s*=
xss regex <img[^>]*onerror
xss regex <svg[^>]*onload
traversal literal ../
traversal literal ..\
traversal literal /etc/passwd
traversal literal \windows\system32
)";

/// Parsed, compiled indicator rules. The content hash of the source text is
/// part of the feature schema identity.
class Ruleset {
 public:
  static Ruleset parse(std::string_view text) {
    Ruleset rs;
    rs.text_.assign(text);
    rs.hash_ = sha256(text);
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line.front() == '#') {
        constexpr std::string_view kVersion = "# version:";
        if (line.starts_with(kVersion)) rs.version_ = std::stoi(line.substr(kVersion.size()));
        continue;
      }
      auto sp1 = line.find(' ');
      auto sp2 = sp1 == std::string::npos ? std::string::npos : line.find(' ', sp1 + 1);
      if (sp2 == std::string::npos || sp2 + 1 >= line.size())
        throw Error("ruleset line " + std::to_string(lineno) + ": expected <flag> <kind> <pattern>");
      auto flag = line.substr(0, sp1);
      auto kind = line.substr(sp1 + 1, sp2 - sp1 - 1);
      Rule rule;
      if (flag == "sqli") rule.flag = Indicator::Sqli;
      else if (flag == "xss") rule.flag = Indicator::Xss;
      else if (flag == "traversal") rule.flag = Indicator::Traversal;
      else throw Error("ruleset line " + std::to_string(lineno) + ": unknown flag " + flag);
      if (kind == "regex") rule.is_regex = true;
      else if (kind != "literal") throw Error("ruleset line " + std::to_string(lineno) + ": unknown kind " + kind);
      rule.pattern = line.substr(sp2 + 1);
      rs.add(std::move(rule));
    }
    return rs;
  }

  static Ruleset load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open ruleset " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  static const Ruleset& builtin() {
    static const Ruleset rs = parse(kDefaultRulesetText);
    return rs;
  }

  /// True iff any rule for `flag` matches the normalized text.
  bool matches(Indicator flag, std::string_view normalized) const {
    for (const auto& r : compiled_) {
      if (r.rule.flag != flag) continue;
      if (r.rule.is_regex) {
        if (std::regex_search(normalized.begin(), normalized.end(), r.re)) return true;
      } else if (normalized.find(r.rule.pattern) != std::string_view::npos) {
        return true;
      }
    }
    return false;
  }

  int version() const { return version_; }
  const Sha256& content_hash() const { return hash_; }
  const std::string& text() const { return text_; }
  std::size_t size() const { return compiled_.size(); }

 private:
  struct Compiled {
    Rule rule;
    std::regex re;
  };

  void add(Rule rule) {
    Compiled c{std::move(rule), {}};
    if (c.rule.is_regex) c.re = std::regex(c.rule.pattern, std::regex::ECMAScript | std::regex::optimize);
    compiled_.push_back(std::move(c));
  }

  std::vector<Compiled> compiled_;
  std::string text_;
  Sha256 hash_{};
  int version_ = 0;
};

inline bool detect_sqli(std::string_view normalized, const Ruleset& rs = Ruleset::builtin()) {
  return rs.matches(Indicator::Sqli, normalized);
}
inline bool detect_xss(std::string_view normalized, const Ruleset& rs = Ruleset::builtin()) {
  return rs.matches(Indicator::Xss, normalized);
}
inline bool detect_traversal(std::string_view normalized, const Ruleset& rs = Ruleset::builtin()) {
  return rs.matches(Indicator::Traversal, normalized);
}

/// Decoded, case-folded text the detectors see, plus the deepest decode.
struct NormalizedRequest {
  std::string text;
  int decode_rounds = 0;
};

inline NormalizedRequest normalize_request(const HttpRequestRecord& req) {
  auto path = normalize_decode(req.path, DecodeContext::Path);
  auto query = normalize_decode(req.query, DecodeContext::Query);
  NormalizedRequest n;
  n.decode_rounds = std::max(path.rounds, query.rounds);
  n.text = std::move(path.text);
  n.text.push_back('?');
  n.text += query.text;
  if (req.body && !req.body->empty()) {
    auto body = normalize_decode(std::string_view(*req.body).substr(0, kBodyExcerptBytes), DecodeContext::Query);
    n.decode_rounds = std::max(n.decode_rounds, body.rounds);
    n.text.push_back('\n');
    n.text += body.text;
  }
  n.text = to_lower_ascii(std::move(n.text));
  return n;
}

// ---------------------------------------------------------------------------
// Complexity

inline constexpr double kUrlLengthScale = 2048.0;
inline constexpr double kParamCountScale = 32.0;
inline constexpr double kHeaderCountScale = 40.0;
inline constexpr double kHeaderValueScale = 256.0;
inline constexpr double kPayloadScale = 65536.0;

/// Raw quantities the complexity score is built from.
struct ComplexityInputs {
  double url_length = 0;
  double param_count = 0;
  double header_count = 0;
  double mean_header_value_length = 0;
  double body_length = 0;
  double special_char_ratio = 0;
};

struct ComplexityComponents {
  double url_length_norm = 0;
  double param_count_norm = 0;
  double header_count_norm = 0;
  double header_complexity = 0;
  double payload_length_norm = 0;
  double special_char_ratio = 0;
  double score = 0;
};

inline ComplexityComponents complexity_components(const ComplexityInputs& in) {
  ComplexityComponents c;
  c.url_length_norm = std::min(in.url_length / kUrlLengthScale, 1.0);
  c.param_count_norm = std::min(in.param_count / kParamCountScale, 1.0);
  c.header_count_norm = std::min(in.header_count / kHeaderCountScale, 1.0);
  c.header_complexity = 0.5 * (c.header_count_norm + std::min(in.mean_header_value_length / kHeaderValueScale, 1.0));
  c.payload_length_norm = std::min(in.body_length / kPayloadScale, 1.0);
  c.special_char_ratio = std::clamp(in.special_char_ratio, 0.0, 1.0);
  c.score = 0.3 * c.url_length_norm + 0.2 * c.param_count_norm + 0.2 * c.header_complexity +
            0.15 * c.payload_length_norm + 0.15 * c.special_char_ratio;
  return c;
}

/// Share of non-alphanumeric characters in path+query. The mandatory leading
/// `/` of the path is not counted; an empty remainder gives 0.
inline double special_char_ratio(std::string_view path, std::string_view query) {
  if (!path.empty() && path.front() == '/') path.remove_prefix(1);
  const std::size_t total = path.size() + query.size();
  if (total == 0) return 0.0;
  auto specials = [](std::string_view s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }));
  };
  return static_cast<double>(specials(path) + specials(query)) / static_cast<double>(total);
}

inline std::size_t param_count(std::string_view query) {
  std::size_t n = 0, start = 0;
  while (start <= query.size()) {
    auto amp = query.find('&', start);
    auto end = amp == std::string_view::npos ? query.size() : amp;
    if (end > start) ++n;
    if (amp == std::string_view::npos) break;
    start = amp + 1;
  }
  return n;
}

inline ComplexityInputs complexity_inputs(const HttpRequestRecord& req) {
  ComplexityInputs in;
  in.url_length = static_cast<double>(req.path.size() + (req.query.empty() ? 0 : 1 + req.query.size()));
  in.param_count = static_cast<double>(param_count(req.query));
  in.header_count = static_cast<double>(req.headers.size());
  if (!req.headers.empty()) {
    std::size_t total = 0;
    for (const auto& h : req.headers) total += h.second.size();
    in.mean_header_value_length = static_cast<double>(total) / static_cast<double>(req.headers.size());
  }
  in.body_length = static_cast<double>(std::max<std::int64_t>(req.body_length, 0));
  in.special_char_ratio = special_char_ratio(req.path, req.query);
  return in;
}

inline double complexity_score(const HttpRequestRecord& req) {
  return complexity_components(complexity_inputs(req)).score;
}

inline double method_rarity(std::string_view method) {
  if (method == "GET" || method == "POST" || method == "HEAD") return 0.0;
  if (method == "PUT" || method == "DELETE" || method == "OPTIONS") return 0.5;
  return 1.0;
}

inline HttpFeatureVector extract_http_features(const HttpRequestRecord& req, const Ruleset& rs = Ruleset::builtin()) {
  const auto c = complexity_components(complexity_inputs(req));
  const auto norm = normalize_request(req);
  HttpFeatureVector v;
  v.url_length_norm = c.url_length_norm;
  v.param_count_norm = c.param_count_norm;
  v.header_count_norm = c.header_count_norm;
  v.header_complexity = c.header_complexity;
  v.payload_length_norm = c.payload_length_norm;
  v.special_char_ratio = c.special_char_ratio;
  v.encoding_depth_norm = static_cast<double>(norm.decode_rounds) / kMaxDecodeRounds;
  v.method_rarity = method_rarity(req.method);
  v.complexity_score = c.score;
  v.sqli_flag = detect_sqli(norm.text, rs) ? 1.0 : 0.0;
  v.xss_flag = detect_xss(norm.text, rs) ? 1.0 : 0.0;
  v.traversal_flag = detect_traversal(norm.text, rs) ? 1.0 : 0.0;
  return v;
}

}  // namespace sentinel::http
