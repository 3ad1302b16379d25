#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fomo/dataset.hpp"
#include "fomo/errors.hpp"

namespace fomo {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("cannot open '{}'", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

class BigEndianReader {
 public:
  BigEndianReader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_++]);
    }
    return v;
  }

  const unsigned char* take(std::size_t n) {
    need(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(
          FormatError::Kind::kTruncated,
          fmt::format("'{}' is truncated: needed {} more bytes at offset {}",
                      path_.string(), n, pos_));
    }
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

void expect_magic(std::uint32_t got, std::uint32_t want,
                  const std::filesystem::path& path) {
  if (got != want) {
    throw FormatError(
        FormatError::Kind::kBadMagic,
        fmt::format("'{}' has magic number {:#010x}, expected {:#010x}",
                    path.string(), got, want));
  }
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const std::filesystem::path& path,
               std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("'{}' line {}: cannot parse '{}'",
                                  path.string(), line_no, field));
  }
  return value;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  const std::string image_bytes = read_file(images);
  const std::string label_bytes = read_file(labels);
  BigEndianReader img(image_bytes, images);
  BigEndianReader lab(label_bytes, labels);

  expect_magic(img.u32(), kImageMagic, images);
  const std::uint32_t n_images = img.u32();
  const std::uint32_t rows = img.u32();
  const std::uint32_t cols = img.u32();
  expect_magic(lab.u32(), kLabelMagic, labels);
  const std::uint32_t n_labels = lab.u32();
  if (n_images != n_labels) {
    throw FormatError(
        FormatError::Kind::kCountMismatch,
        fmt::format("'{}' holds {} images but '{}' holds {} labels",
                    images.string(), n_images, labels.string(), n_labels));
  }

  Dataset out;
  out.n_features = static_cast<std::size_t>(rows) * cols;
  const std::size_t n = n_images;
  const unsigned char* pixels = img.take(n * out.n_features);
  const unsigned char* ys = lab.take(n);
  out.features.resize(n * out.n_features);
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    out.features[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  int max_label = -1;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = ys[i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.n_classes = static_cast<std::size_t>(max_label + 1);
  out.split.assign(n, SplitTag::kTrainPool);
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("cannot open '{}'", path.string()));
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(FormatError::Kind::kTruncated,
                      fmt::format("'{}' is empty", path.string()));
  }
  const auto header = split_fields(line);
  if (header.size() < 3 || header[header.size() - 2] != "label" ||
      header.back() != "split") {
    throw FormatError(
        FormatError::Kind::kMalformed,
        fmt::format("'{}': header must be feature_0..feature_{{d-1}},label,split",
                    path.string()));
  }
  Dataset out;
  out.n_features = header.size() - 2;
  for (std::size_t j = 0; j < out.n_features; ++j) {
    if (header[j] != fmt::format("feature_{}", j)) {
      throw FormatError(FormatError::Kind::kMalformed,
                        fmt::format("'{}': column {} is '{}', expected feature_{}",
                                    path.string(), j, header[j], j));
    }
  }
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw FormatError(FormatError::Kind::kMalformed,
                        fmt::format("'{}' line {}: {} fields, expected {}",
                                    path.string(), line_no, fields.size(),
                                    header.size()));
    }
    for (std::size_t j = 0; j < out.n_features; ++j) {
      out.features.push_back(parse_number<double>(fields[j], path, line_no));
    }
    const int y = parse_number<int>(fields[out.n_features], path, line_no);
    if (y < 0) {
      throw FormatError(FormatError::Kind::kMalformed,
                        fmt::format("'{}' line {}: negative label",
                                    path.string(), line_no));
    }
    out.labels.push_back(y);
    max_label = std::max(max_label, y);
    const std::string_view tag = fields.back();
    if (tag == "train") {
      out.split.push_back(SplitTag::kTrainPool);
    } else if (tag == "test") {
      out.split.push_back(SplitTag::kTestPool);
    } else {
      throw FormatError(FormatError::Kind::kMalformed,
                        fmt::format("'{}' line {}: split must be train or test",
                                    path.string(), line_no));
    }
  }
  out.n_classes = static_cast<std::size_t>(max_label + 1);
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError(FormatError::Kind::kMalformed,
                      fmt::format("cannot write '{}'", path.string()));
  }
  for (std::size_t j = 0; j < data.n_features; ++j) {
    out << "feature_" << j << ',';
  }
  out << "label,split\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) out << fmt::format("{}", v) << ',';
    out << data.labels[i] << ','
        << (data.split[i] == SplitTag::kTrainPool ? "train" : "test") << '\n';
  }
}

}  // namespace fomo
