#include "lmbrain/io.hpp"

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lmbrain {

namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::byte>((v >> s) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace

std::vector<std::byte> encode_hfm(const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError("encode_hfm: shape exceeds uint32");
  }
  std::vector<std::byte> out;
  out.reserve(kHfmHeaderBytes + 4 * static_cast<std::size_t>(m.size()));
  for (char c : kHfmMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const auto f = static_cast<float>(m(r, c));
      if (!std::isfinite(f)) {
        throw RangeError("encode_hfm: entry (" + std::to_string(r) + "," + std::to_string(c) +
                         ") is not representable as a finite float32");
      }
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

Matrix decode_hfm(std::span<const std::byte> bytes) {
  if (bytes.size() < kHfmHeaderBytes) throw FormatError("HFM1: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kHfmMagic, 4) != 0) throw FormatError("HFM1: bad magic", 0);
  const std::uint64_t rows = get_u32(bytes, 4);
  const std::uint64_t cols = get_u32(bytes, 8);
  const std::uint64_t expected = kHfmHeaderBytes + 4 * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError("HFM1: header declares " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " but payload size differs",
                      std::min<std::uint64_t>(bytes.size(), expected));
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t at = kHfmHeaderBytes;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c, at += 4) {
      const float f = std::bit_cast<float>(get_u32(bytes, at));
      if (!std::isfinite(f)) throw FormatError("HFM1: non-finite entry", at);
      m(r, c) = f;
    }
  }
  return m;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string(), 0);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string(), 0);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

Matrix load_matrix(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kHfmMagic, 4) == 0) return decode_hfm(bytes);
  return load_csv_matrix(path);
}

void store_matrix(const Matrix& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_hfm(m));
}

Matrix load_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::uint64_t offset = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cells = split_commas(body);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_double(cells[i], values[i]);
    if (!numeric) {
      if (first_content) {
        first_content = false;  // header row
        continue;
      }
      throw FormatError("CSV: non-numeric cell in " + path.string(), line_start);
    }
    first_content = false;
    for (double v : values) {
      if (!std::isfinite(v)) throw FormatError("CSV: non-finite entry in " + path.string(), line_start);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw FormatError("CSV: ragged row in " + path.string(), line_start);
    }
    rows.push_back(std::move(values));
  }
  const Index n = static_cast<Index>(rows.size());
  const Index d = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix m(n, d);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < d; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void store_csv_matrix(const Matrix& m, const std::filesystem::path& path, const std::string& comment) {
  std::ostringstream os;
  os.precision(17);
  if (!comment.empty()) os << "# " << comment << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << '\n';
  }
  write_text_file(path, os.str());
}

void TokenTimeline::validate() const {
  if (!(tr_seconds > 0.0) || !std::isfinite(tr_seconds)) {
    throw ConfigError("timeline: tr_seconds must be positive");
  }
  for (std::size_t i = 0; i < token_times.size(); ++i) {
    if (!std::isfinite(token_times[i])) throw ConfigError("timeline: non-finite token time");
    if (i > 0 && token_times[i] < token_times[i - 1]) {
      throw ConfigError("timeline: token times decrease at index " + std::to_string(i));
    }
  }
}

TokenTimeline parse_timeline_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("timeline JSON: ") + e.what(), e.byte);
  }
  TokenTimeline tl;
  try {
    tl.tr_seconds = j.value("tr_seconds", 1.5);
    tl.token_times = j.at("token_times").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("timeline JSON: ") + e.what(), 0);
  }
  tl.validate();
  return tl;
}

TokenTimeline load_timeline(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_timeline_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string timeline_to_json(const TokenTimeline& tl) {
  nlohmann::json j;
  j["tr_seconds"] = tl.tr_seconds;
  j["token_times"] = tl.token_times;
  return j.dump() + "\n";
}

std::vector<RoiLabel> load_roi_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::vector<RoiLabel> out;
  std::string line;
  std::uint64_t offset = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cells = split_commas(body);
    if (cells.size() != 2) throw FormatError("ROI CSV: expected 2 columns", line_start);
    std::int64_t idx = 0;
    const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), idx);
    if (res.ec != std::errc{} || res.ptr != cells[0].data() + cells[0].size()) {
      if (first_content) {
        first_content = false;
        continue;
      }
      throw FormatError("ROI CSV: bad voxel index", line_start);
    }
    first_content = false;
    if (idx < 0) throw FormatError("ROI CSV: negative voxel index", line_start);
    out.push_back({idx, std::string(cells[1])});
  }
  return out;
}

void store_roi_labels(const std::vector<RoiLabel>& labels, const std::filesystem::path& path,
                      const std::string& comment) {
  std::ostringstream os;
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "voxel_index,roi_label\n";
  for (const auto& l : labels) os << l.voxel_index << ',' << l.roi << '\n';
  write_text_file(path, os.str());
}

}  // namespace lmbrain
