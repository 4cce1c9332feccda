#include "verify/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace verify {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoLemmasFound: return "NoLemmasFound";
    case ErrorCode::MalformedLemmaBlock: return "MalformedLemmaBlock";
    case ErrorCode::MissingGoal: return "MissingGoal";
    case ErrorCode::UnknownVariableType: return "UnknownVariableType";
    case ErrorCode::NormalizationCycle: return "NormalizationCycle";
    case ErrorCode::MissingTemplate: return "MissingTemplate";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::NoCodeBlock: return "NoCodeBlock";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::CompositionCompileError: return "CompositionCompileError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IllegalDecision: return "IllegalDecision";
    case ErrorCode::SessionFinished: return "SessionFinished";
    case ErrorCode::NotAwaitingDecision: return "NotAwaitingDecision";
    case ErrorCode::StaleSequence: return "StaleSequence";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::UnknownProblem: return "UnknownProblem";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IdSetMismatch: return "IdSetMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  size_t b = 0;
  size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= s.size()) {
    size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(s.substr(start));
      break;
    }
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string canonical_dump(const json& j) { return j.dump(2); }

}  // namespace verify
