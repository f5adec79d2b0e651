#include "vqrank/corpus.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vqrank/errors.hpp"

namespace vqr {

using nlohmann::json;

double soft_label(Grade g) {
  switch (g) {
    case Grade::kBad:
      return 0.0;
    case Grade::kFair:
      return 0.3;
    case Grade::kGood:
      return 0.6;
    case Grade::kExcellent:
      return 1.0;
  }
  throw ContractViolation("soft_label: invalid grade");
}

int ordinal(Grade g) { return static_cast<int>(g); }

std::string_view grade_name(Grade g) {
  switch (g) {
    case Grade::kBad:
      return "bad";
    case Grade::kFair:
      return "fair";
    case Grade::kGood:
      return "good";
    case Grade::kExcellent:
      return "excellent";
  }
  throw ContractViolation("grade_name: invalid grade");
}

Grade parse_grade(std::string_view name) {
  for (const Grade g : kAllGrades) {
    if (grade_name(g) == name) return g;
  }
  throw ValidationError("unknown grade \"" + std::string(name) + "\"");
}

int binary_label(Grade g) { return ordinal(g) >= ordinal(Grade::kGood) ? 1 : 0; }

void validate_record(const VideoRecord& r) {
  const std::string who = "record \"" + r.id + "\": ";
  if (r.text_embedding.rank() != 1) throw ValidationError(who + "text embedding must be a vector");
  if (r.frame_embeddings.rank() != 2) throw ValidationError(who + "frame embeddings must be a matrix");
  if (r.cover_embeddings.rank() != 2) throw ValidationError(who + "cover embeddings must be a matrix");
  const std::size_t m = r.frame_embeddings.dim(0);
  if (m < 1 || m > kMaxFrames) {
    throw ValidationError(who + std::to_string(m) + " frames, expected 1.." +
                          std::to_string(kMaxFrames));
  }
  if (r.cover_embeddings.dim(0) != kCoverCount) {
    throw ValidationError(who + "expected exactly 2 cover embeddings");
  }
  if (r.cover_embeddings.dim(1) != r.frame_embeddings.dim(1)) {
    throw SchemaError(who + "cover and frame embedding dimensions differ");
  }
  if (!r.text_embedding.all_finite() || !r.frame_embeddings.all_finite() ||
      !r.cover_embeddings.all_finite()) {
    throw NumericError(who + "non-finite embedding value");
  }
}

CorpusDims corpus_dims(const std::vector<VideoRecord>& records) {
  CorpusDims dims;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const VideoRecord& r = records[i];
    if (i == 0) {
      dims = {r.text_dim(), r.frame_dim()};
    } else if (r.text_dim() != dims.text_dim || r.frame_dim() != dims.frame_dim) {
      throw SchemaError("record \"" + r.id + "\": dimensions (d_t=" + std::to_string(r.text_dim()) +
                        ", d_f=" + std::to_string(r.frame_dim()) + ") differ from corpus (d_t=" +
                        std::to_string(dims.text_dim) + ", d_f=" + std::to_string(dims.frame_dim) +
                        ")");
    }
  }
  return dims;
}

namespace {

std::vector<float> parse_vector(const json& j, std::size_t line, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw ParseError(line, std::string("\"") + key + "\" must be a non-empty array of numbers");
  }
  std::vector<float> out;
  out.reserve(j.size());
  for (const json& v : j) {
    if (!v.is_number()) throw ParseError(line, std::string("\"") + key + "\" contains a non-number");
    const float f = static_cast<float>(v.get<double>());
    if (!std::isfinite(f)) {
      throw ValidationError("line " + std::to_string(line) + ": non-finite value in \"" + key + "\"");
    }
    out.push_back(f);
  }
  return out;
}

Tensor<float> parse_matrix(const json& j, std::size_t line, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw ParseError(line, std::string("\"") + key + "\" must be a non-empty array of arrays");
  }
  std::vector<float> flat;
  std::size_t cols = 0;
  for (const json& row : j) {
    std::vector<float> r = parse_vector(row, line, key);
    if (cols == 0) {
      cols = r.size();
    } else if (r.size() != cols) {
      throw SchemaError("line " + std::to_string(line) + ": ragged rows in \"" + key + "\"");
    }
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor<float>(Shape{j.size(), cols}, std::move(flat));
}

// Shortest decimal that reads back to the same float through a double parse.
void append_float(std::string& out, float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
  const float back = static_cast<float>(std::strtod(std::string(text).c_str(), nullptr));
  if (back != v || std::signbit(back) != std::signbit(v)) {
    res = std::to_chars(buf, buf + sizeof(buf), static_cast<double>(v));
    text = std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
  }
  out.append(text);
  // Integral spellings would parse as JSON integers and lose the sign of -0.
  if (text.find_first_of(".e") == std::string_view::npos) out.append(".0");
}

void append_row(std::string& out, const float* data, std::size_t n) {
  out.push_back('[');
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.push_back(',');
    append_float(out, data[i]);
  }
  out.push_back(']');
}

void append_matrix(std::string& out, const Tensor<float>& t) {
  const std::size_t cols = t.dim(1);
  out.push_back('[');
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    if (r) out.push_back(',');
    append_row(out, t.data().data() + r * cols, cols);
  }
  out.push_back(']');
}

}  // namespace

VideoRecord parse_record(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_number, "record must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "text_embedding" && key != "frame_embeddings" &&
        key != "cover_embeddings" && key != "grade") {
      throw ParseError(line_number, "unknown key \"" + key + "\"");
    }
  }
  for (const char* key : {"id", "text_embedding", "frame_embeddings", "cover_embeddings"}) {
    if (!j.contains(key)) throw ParseError(line_number, std::string("missing key \"") + key + "\"");
  }
  if (!j["id"].is_string()) throw ParseError(line_number, "\"id\" must be a string");

  VideoRecord r;
  r.id = j["id"].get<std::string>();
  r.text_embedding = Tensor<float>::vector(parse_vector(j["text_embedding"], line_number, "text_embedding"));
  r.frame_embeddings = parse_matrix(j["frame_embeddings"], line_number, "frame_embeddings");
  r.cover_embeddings = parse_matrix(j["cover_embeddings"], line_number, "cover_embeddings");
  if (j.contains("grade")) {
    if (!j["grade"].is_string()) throw ParseError(line_number, "\"grade\" must be a string");
    try {
      r.grade = parse_grade(j["grade"].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  try {
    validate_record(r);
  } catch (const SchemaError& e) {
    throw SchemaError("line " + std::to_string(line_number) + ": " + e.what());
  } catch (const Error& e) {
    throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
  }
  return r;
}

std::string format_record(const VideoRecord& r) {
  std::string out;
  out.reserve(64 + 12 * (r.text_embedding.numel() + r.frame_embeddings.numel() +
                         r.cover_embeddings.numel()));
  out += "{\"id\":";
  out += json(r.id).dump();
  out += ",\"text_embedding\":";
  append_row(out, r.text_embedding.data().data(), r.text_embedding.numel());
  out += ",\"frame_embeddings\":";
  append_matrix(out, r.frame_embeddings);
  out += ",\"cover_embeddings\":";
  append_matrix(out, r.cover_embeddings);
  if (r.grade) {
    out += ",\"grade\":\"";
    out += grade_name(*r.grade);
    out += '"';
  }
  out += '}';
  return out;
}

std::vector<VideoRecord> load_corpus(const std::filesystem::path& path, bool require_grades) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<VideoRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    VideoRecord r = parse_record(line, line_number);
    if (require_grades && !r.grade) {
      throw ValidationError("line " + std::to_string(line_number) + ": record \"" + r.id +
                            "\" has no grade");
    }
    if (!records.empty() && (r.text_dim() != records[0].text_dim() ||
                             r.frame_dim() != records[0].frame_dim())) {
      throw SchemaError("line " + std::to_string(line_number) + ": dimensions differ from the first record");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_corpus(const std::vector<VideoRecord>& records, const std::filesystem::path& path) {
  for (const VideoRecord& r : records) validate_record(r);
  corpus_dims(records);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus " + path.string());
  for (const VideoRecord& r : records) {
    out << format_record(r) << '\n';
  }
  out.flush();
  if (!out) throw IoError("failed writing corpus " + path.string());
}

}  // namespace vqr
