#pragma once

// The three-section structured report layout and a tolerant Markdown
// section parser for it.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ophvqa/common.hpp"

namespace ophvqa {

enum class ReportSection { ImageType, ImagingFindings, DiagnosticSuggestions };

inline constexpr std::array<ReportSection, 3> kReportSections = {
    ReportSection::ImageType, ReportSection::ImagingFindings,
    ReportSection::DiagnosticSuggestions};

inline std::string_view heading(ReportSection s) {
  switch (s) {
    case ReportSection::ImageType: return "Image Type";
    case ReportSection::ImagingFindings: return "Imaging Findings";
    case ReportSection::DiagnosticSuggestions: return "Diagnostic Suggestions";
  }
  return "?";
}

struct ParsedSection {
  std::string title;                    // heading text as written
  std::optional<ReportSection> kind;    // canonical section, if recognised
  std::string body;                     // trimmed text under the heading
};

struct ParsedReport {
  std::string preamble;  // text before the first heading
  std::vector<ParsedSection> sections;

  const ParsedSection* find(ReportSection kind) const {
    for (const auto& s : sections)
      if (s.kind == kind) return &s;
    return nullptr;
  }
  std::string_view body(ReportSection kind) const {
    const auto* s = find(kind);
    return s ? std::string_view(s->body) : std::string_view();
  }
  /// All three canonical sections present, non-empty, each once, in order.
  bool well_structured() const {
    std::vector<ReportSection> seen;
    for (const auto& s : sections) {
      if (!s.kind) continue;
      if (trim(s.body).empty()) return false;
      seen.push_back(*s.kind);
    }
    return seen == std::vector<ReportSection>(kReportSections.begin(), kReportSections.end());
  }
};

namespace detail {

inline std::string letters_lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

inline std::optional<ReportSection> classify_heading(std::string_view title) {
  const auto k = letters_lower(title);
  if (k == "imagetype" || k == "examinationtype" || k == "examtype" || k == "imagingtype" ||
      k == "examination" || k == "modality")
    return ReportSection::ImageType;
  if (k == "imagingfindings" || k == "findings" || k == "imagefindings") return ReportSection::ImagingFindings;
  if (k == "diagnosticsuggestions" || k == "diagnosticsuggestion" || k == "diagnosis" ||
      k == "diagnosticrecommendations" || k == "impression" || k == "diagnosisandrecommendations" ||
      k == "recommendations")
    return ReportSection::DiagnosticSuggestions;
  return std::nullopt;
}

// Recognises "# Title", "**Title**", "**Title:**" and "Title:" lines. A
// plain "Title:" line only counts when Title is a known section name, and
// any text after its colon becomes the first body line.
inline std::optional<std::pair<std::string, std::string>> heading_line(std::string_view line) {
  auto t = trim(line);
  if (t.empty()) return std::nullopt;
  if (t.front() == '#') {
    while (!t.empty() && t.front() == '#') t.remove_prefix(1);
    auto title = trim(t);
    while (!title.empty() && (title.back() == ':' || title.back() == '*')) title.remove_suffix(1);
    while (!title.empty() && title.front() == '*') title.remove_prefix(1);
    return std::make_pair(std::string(trim(title)), std::string());
  }
  if (t.size() > 4 && t.substr(0, 2) == "**") {
    auto close = t.find("**", 2);
    if (close != std::string_view::npos) {
      auto title = trim(t.substr(2, close - 2));
      auto rest = trim(t.substr(close + 2));
      if (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
      while (!title.empty() && title.back() == ':') title.remove_suffix(1);
      if (rest.empty() || classify_heading(title))
        return std::make_pair(std::string(trim(title)), std::string(rest));
    }
  }
  auto colon = t.find(':');
  if (colon != std::string_view::npos && colon > 0 && colon < 40) {
    auto title = trim(t.substr(0, colon));
    if (classify_heading(title))
      return std::make_pair(std::string(title), std::string(trim(t.substr(colon + 1))));
  }
  return std::nullopt;
}

}  // namespace detail

inline ParsedReport parse_report(std::string_view text) {
  ParsedReport out;
  std::string* body = &out.preamble;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (auto h = detail::heading_line(line)) {
      out.sections.push_back({h->first, detail::classify_heading(h->first), h->second});
      body = &out.sections.back().body;
    } else {
      if (!body->empty()) body->push_back('\n');
      body->append(line);
    }
    start = end + 1;
  }
  out.preamble = std::string(trim(out.preamble));
  for (auto& s : out.sections) s.body = std::string(trim(s.body));
  return out;
}

}  // namespace ophvqa
