#include "rtcan/csv.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "rtcan/errors.hpp"

namespace rtcan {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail(Err::IoError, where + ": cannot parse number '" + s + "'");
  }
  return value;
}

// Reads all non-empty lines, stripping trailing CR.
std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

bool is_header(const std::vector<std::string>& fields) {
  return !fields.empty() &&
         (fields[0] == "subject_id" || fields[0] == "stimulus_id" ||
          fields[0] == "t_s" || fields[0] == "t");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::IoError, "cannot write " + path);
  out.precision(17);
  return out;
}

}  // namespace

std::vector<EdaTrace> read_eda_csv(const std::string& path) {
  std::vector<EdaTrace> traces;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    auto fields = split_fields(line);
    if (lineno == 1 && is_header(fields)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() < 5) {
      fail(Err::IoError, where + ": EDA row needs id,id,rate and >= 2 samples");
    }
    EdaTrace t;
    t.subject_id = fields[0];
    t.stimulus_id = fields[1];
    t.sampling_hz = parse_double(fields[2], where);
    t.samples.reserve(fields.size() - 3);
    for (std::size_t i = 3; i < fields.size(); ++i) {
      t.samples.push_back(parse_double(fields[i], where));
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

void write_eda_csv(const std::string& path, const std::vector<EdaTrace>& traces) {
  auto out = open_out(path);
  for (const auto& t : traces) {
    out << t.subject_id << ',' << t.stimulus_id << ',' << t.sampling_hz;
    for (double s : t.samples) out << ',' << s;
    out << '\n';
  }
}

std::vector<AnnotationRecord> read_annotations_csv(const std::string& path) {
  std::vector<AnnotationRecord> records;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    auto fields = split_fields(line);
    if (lineno == 1 && is_header(fields)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() != 4) {
      fail(Err::IoError, where + ": annotation row needs 4 fields");
    }
    AnnotationRecord r;
    r.subject_id = fields[0];
    r.stimulus_id = fields[1];
    r.valence = parse_double(fields[2], where);
    r.arousal = parse_double(fields[3], where);
    if (r.valence < 1.0 || r.valence > 9.0 || r.arousal < 1.0 || r.arousal > 9.0) {
      fail(Err::BadLabel, where + ": scores must lie in [1,9]");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_annotations_csv(const std::string& path,
                           const std::vector<AnnotationRecord>& records) {
  auto out = open_out(path);
  out << "subject_id,stimulus_id,valence,arousal\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.stimulus_id << ',' << r.valence << ','
        << r.arousal << '\n';
  }
}

std::vector<StimulusFeatures> read_stimulus_features_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) fail(Err::IoError, path + ": empty feature file");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "stimulus_id") {
    fail(Err::IoError, path + ": feature file needs a stimulus_id,f0,... header");
  }
  const std::size_t dim = header.size() - 1;
  std::vector<StimulusFeatures> rows;
  for (std::size_t lineno = 2; lineno <= lines.size(); ++lineno) {
    const auto fields = split_fields(lines[lineno - 1]);
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() != dim + 1) {
      fail(Err::IoError, where + ": expected " + std::to_string(dim + 1) +
                             " fields, got " + std::to_string(fields.size()));
    }
    StimulusFeatures f;
    f.stimulus_id = fields[0];
    f.vector.reserve(dim);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      f.vector.push_back(parse_double(fields[i], where));
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

void write_stimulus_features_csv(const std::string& path,
                                 const std::vector<StimulusFeatures>& rows) {
  auto out = open_out(path);
  out << "stimulus_id";
  const std::size_t dim = rows.empty() ? 0 : rows[0].vector.size();
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << '\n';
  for (const auto& r : rows) {
    if (r.vector.size() != dim) {
      fail(Err::ShapeMismatch, "feature rows must share one dimension");
    }
    out << r.stimulus_id;
    for (double v : r.vector) out << ',' << v;
    out << '\n';
  }
}

void write_decomposition_csv(const std::string& path, double sampling_hz,
                             const DecomposedEda& d) {
  auto out = open_out(path);
  out << "t_s,origin,phasic,tonic,driver,residual\n";
  for (std::size_t i = 0; i < d.origin.size(); ++i) {
    out << static_cast<double>(i) / sampling_hz << ',' << d.origin[i] << ','
        << d.phasic[i] << ',' << d.tonic[i] << ',' << d.driver[i] << ','
        << d.residual[i] << '\n';
  }
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream hex;
  hex << std::hex << hash;
  return hex.str();
}

}  // namespace rtcan
