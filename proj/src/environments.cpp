#include "kmtl/environments.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#ifdef MTB_HAVE_OPENSSL
#include <openssl/evp.h>
#endif

namespace kmtl {

namespace {

constexpr double kPi = 3.14159265358979323846;

Matrix rotation2(double theta) {
  Matrix r(2, 2);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  r << c, -s, s, c;
  return r;
}

std::vector<double> spaced_angles(int num_arms) {
  std::vector<double> angles(static_cast<std::size_t>(num_arms), 0.0);
  if (num_arms > 1) {
    const double step = (kPi / 2.0) / (num_arms - 1);
    for (int a = 0; a < num_arms; ++a) angles[static_cast<std::size_t>(a)] = a * step;
  }
  return angles;
}

Vector ellipse_point(const SyntheticNewsConfig& config, double phi) {
  Vector x(2);
  x << config.minor_axis * std::sin(phi), config.major_axis * std::cos(phi);
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// SyntheticNewsEnv

SyntheticNewsEnv::SyntheticNewsEnv(SyntheticNewsConfig config, std::uint64_t seed)
    : config_(config), angles_(spaced_angles(config.num_arms)), rng_(seed) {
  if (config_.num_arms < 1)
    throw std::invalid_argument("SyntheticNewsEnv: need at least one arm");
  if (!(config_.major_axis > 0.0) || !(config_.minor_axis > 0.0))
    throw std::invalid_argument("SyntheticNewsEnv: ellipse axes must be positive");
  if (config_.noise_sd < 0.0)
    throw std::invalid_argument("SyntheticNewsEnv: negative noise scale");
}

double SyntheticNewsEnv::expected_reward(double minor_coord, int arm, int num_arms) {
  const double gap = minor_coord - static_cast<double>(arm) / num_arms + 0.5;
  return 1.0 - gap * gap;
}

RoundObservation SyntheticNewsEnv::next_round(int) {
  std::uniform_real_distribution<double> phi_dist(0.0, 2.0 * kPi);
  const double phi = phi_dist(rng_);
  const Vector xu = ellipse_point(config_, phi);

  const int N = config_.num_arms;
  RoundObservation obs;
  obs.candidates.reserve(static_cast<std::size_t>(N));
  obs.expected.resize(N);
  obs.realized.resize(N);
  for (int a = 1; a <= N; ++a) {
    obs.candidates.push_back(
        {ArmDescriptor::arm(a), rotation2(angles_[static_cast<std::size_t>(a - 1)]) * xu});
    const double r = expected_reward(xu(0), a, N);
    if (r < -1e-12 || r > 1.0 + 1e-12)
      throw std::runtime_error(
          "SyntheticNewsEnv: expected reward outside [0,1]; the configured ellipse "
          "violates the reward model (minor axis must stay within 0.5)");
    obs.expected(a - 1) = std::min(1.0, std::max(0.0, r));
  }
  if (config_.noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.noise_sd);
    for (int a = 0; a < N; ++a) obs.realized(a) = obs.expected(a) + noise(rng_);
  } else {
    obs.realized = obs.expected;
  }
  return obs;
}

TaskSimilarity SyntheticNewsEnv::known_task_similarity(double bandwidth) const {
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("known_task_similarity: bandwidth must be positive");
  const int N = config_.num_arms;
  Matrix kz(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double d = angles_[static_cast<std::size_t>(i)] - angles_[static_cast<std::size_t>(j)];
      const double v = std::exp(-d * d / (2.0 * bandwidth * bandwidth));
      kz(i, j) = v;
      kz(j, i) = v;
    }
  }
  return TaskSimilarity::known(kz);
}

std::vector<Vector> SyntheticNewsEnv::sample_user_contexts(
    const SyntheticNewsConfig& config, std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phi_dist(0.0, 2.0 * kPi);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(ellipse_point(config, phi_dist(rng)));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& what) {
  throw DatasetError(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_number(const std::string& token, const std::string& path, int line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(token, &pos);
    if (pos != token.size()) parse_fail(path, line_no, "trailing junk in number '" + token + "'");
    if (!std::isfinite(v)) parse_fail(path, line_no, "non-finite number '" + token + "'");
    return v;
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception&) {
    parse_fail(path, line_no, "expected a number, got '" + token + "'");
  }
}

int parse_raw_label(const std::string& token, const std::string& path, int line_no) {
  const double v = parse_number(token, path, line_no);
  const double r = std::nearbyint(v);
  if (std::abs(v - r) > 1e-9) parse_fail(path, line_no, "label '" + token + "' is not integral");
  return static_cast<int>(r);
}

std::string path_stem(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return base;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

struct RawRows {
  std::vector<int> labels;
  std::vector<std::vector<std::pair<int, double>>> features;  // 1-based indices
  int max_index = 0;
};

RawRows read_libsvm(std::istream& in, const std::string& path) {
  RawRows rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;  // blank line

    rows.labels.push_back(parse_raw_label(token, path, line_no));
    std::vector<std::pair<int, double>> feats;
    while (ls >> token) {
      const std::size_t colon = token.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= token.size())
        parse_fail(path, line_no, "expected index:value, got '" + token + "'");
      const double idx_val = parse_number(token.substr(0, colon), path, line_no);
      const int idx = static_cast<int>(std::nearbyint(idx_val));
      if (std::abs(idx_val - idx) > 1e-9 || idx < 1)
        parse_fail(path, line_no, "invalid feature index in '" + token + "'");
      for (const auto& f : feats)
        if (f.first == idx) parse_fail(path, line_no, "duplicate feature index " + std::to_string(idx));
      feats.emplace_back(idx, parse_number(token.substr(colon + 1), path, line_no));
      rows.max_index = std::max(rows.max_index, idx);
    }
    rows.features.push_back(std::move(feats));
  }
  return rows;
}

RawRows read_csv(std::istream& in, const std::string& path) {
  RawRows rows;
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path + ": empty file");
  const std::vector<std::string> header = split_csv(line);
  if (header.empty() || header.front() != "label")
    parse_fail(path, 1, "header must start with 'label'");
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) parse_fail(path, 1, "header declares no feature columns");

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv(line);
    if (static_cast<int>(fields.size()) != d + 1)
      parse_fail(path, line_no,
                 "expected " + std::to_string(d + 1) + " fields, got " +
                     std::to_string(fields.size()));
    rows.labels.push_back(parse_raw_label(fields[0], path, line_no));
    std::vector<std::pair<int, double>> feats;
    feats.reserve(static_cast<std::size_t>(d));
    for (int j = 1; j <= d; ++j)
      feats.emplace_back(j, parse_number(fields[static_cast<std::size_t>(j)], path, line_no));
    rows.features.push_back(std::move(feats));
  }
  rows.max_index = d;
  return rows;
}

}  // namespace

MulticlassDataset load_dataset(const std::string& path, DatasetFormat format,
                               const DatasetExpectation& expect) {
  if (!expect.sha256.empty()) {
#ifdef MTB_HAVE_OPENSSL
    const std::string actual = sha256_file(path);
    if (actual != expect.sha256)
      throw DatasetError(path + ": checksum mismatch (expected " + expect.sha256 +
                         ", got " + actual + ")");
#endif
  }

  std::ifstream in(path);
  if (!in) throw DatasetError(path + ": cannot open file");

  RawRows rows = format == DatasetFormat::LibsvmSparse ? read_libsvm(in, path)
                                                       : read_csv(in, path);
  const int n = static_cast<int>(rows.labels.size());
  if (n == 0) throw DatasetError(path + ": no data rows");

  int d = rows.max_index;
  if (expect.dim > 0) {
    if (rows.max_index > expect.dim)
      throw DatasetError(path + ": feature index " + std::to_string(rows.max_index) +
                         " exceeds the expected dimension " + std::to_string(expect.dim));
    d = expect.dim;  // sparse rows may leave trailing dimensions untouched
  }

  // Remap the file's labels onto 1..K by sorted raw value.
  std::map<int, int> remap;
  for (int raw : rows.labels) remap.emplace(raw, 0);
  int next = 1;
  for (auto& kv : remap) kv.second = next++;
  const int num_classes = static_cast<int>(remap.size());
  if (expect.num_classes > 0 && num_classes != expect.num_classes)
    throw DatasetError(path + ": found " + std::to_string(num_classes) +
                       " classes, expected " + std::to_string(expect.num_classes));

  MulticlassDataset ds;
  ds.name = path_stem(path);
  ds.num_classes = num_classes;
  ds.features = Matrix::Zero(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.labels[static_cast<std::size_t>(i)] = remap.at(rows.labels[static_cast<std::size_t>(i)]);
    for (const auto& f : rows.features[static_cast<std::size_t>(i)])
      ds.features(i, f.first - 1) = f.second;
  }
  return ds;
}

void split_dataset(MulticlassDataset& dataset, double validation_fraction,
                   std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("split_dataset: fraction must lie in (0,1)");
  if (dataset.size() == 0) throw std::invalid_argument("split_dataset: empty dataset");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.num_classes));
  for (int i = 0; i < dataset.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)] - 1)]
        .push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<int> validation;
  std::vector<int> test;
  for (auto& group : by_class) {
    std::shuffle(group.begin(), group.end(), rng);
    const int size = static_cast<int>(group.size());
    int n_val = static_cast<int>(std::lround(validation_fraction * size));
    if (size >= 2)
      n_val = std::max(1, std::min(size - 1, n_val));
    else
      n_val = 0;  // a singleton class stays available for play
    for (int i = 0; i < size; ++i)
      (i < n_val ? validation : test).push_back(group[static_cast<std::size_t>(i)]);
  }
  std::sort(validation.begin(), validation.end());
  std::sort(test.begin(), test.end());
  dataset.validation_idx = std::move(validation);
  dataset.test_idx = std::move(test);
}

// ---------------------------------------------------------------------------
// MulticlassEnv

MulticlassEnv::MulticlassEnv(std::shared_ptr<const MulticlassDataset> dataset,
                             std::uint64_t seed)
    : dataset_(std::move(dataset)) {
  if (!dataset_) throw std::invalid_argument("MulticlassEnv: null dataset");
  if (dataset_->test_idx.empty())
    throw std::invalid_argument("MulticlassEnv: dataset has no test split");
  order_ = dataset_->test_idx;
  std::mt19937_64 rng(seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

RoundObservation MulticlassEnv::next_round(int t) {
  if (t < 1 || t > static_cast<int>(order_.size()))
    throw std::out_of_range("MulticlassEnv: round " + std::to_string(t) +
                            " outside the test split of size " +
                            std::to_string(order_.size()));
  const int idx = order_[static_cast<std::size_t>(t - 1)];
  const Vector x = dataset_->features.row(idx).transpose();
  const int label = dataset_->labels[static_cast<std::size_t>(idx)];

  const int N = dataset_->num_classes;
  RoundObservation obs;
  obs.candidates.reserve(static_cast<std::size_t>(N));
  obs.expected.resize(N);
  for (int a = 1; a <= N; ++a) {
    obs.candidates.push_back({ArmDescriptor::arm(a), x});
    obs.expected(a - 1) = a == label ? 1.0 : 0.0;
  }
  obs.realized = obs.expected;
  return obs;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(path + ": cannot open manifest");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw DatasetError(path + ": manifest is not valid JSON (" + e.what() + ")");
  }

  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("datasets"))
      throw DatasetError(path + ": manifest object lacks a 'datasets' array");
    list = &doc.at("datasets");
  }
  if (!list->is_array()) throw DatasetError(path + ": manifest must be an array");

  std::vector<ManifestEntry> entries;
  for (const auto& item : *list) {
    ManifestEntry e;
    try {
      e.name = item.at("name").get<std::string>();
      e.path = item.at("path").get<std::string>();
      e.format = item.at("format").get<std::string>();
      e.num_classes = item.at("num_classes").get<int>();
      e.dim = item.at("dim").get<int>();
      e.url = item.value("url", std::string());
      e.sha256 = item.value("sha256", std::string());
    } catch (const std::exception& ex) {
      throw DatasetError(path + ": bad manifest entry (" + ex.what() + ")");
    }
    parse_dataset_format(e.format);  // validate eagerly
    entries.push_back(std::move(e));
  }
  return entries;
}

DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "libsvm-sparse") return DatasetFormat::LibsvmSparse;
  if (s == "csv-dense") return DatasetFormat::CsvDense;
  throw DatasetError("unknown dataset format '" + s +
                     "' (expected libsvm-sparse or csv-dense)");
}

// ---------------------------------------------------------------------------
// Checksums

#ifdef MTB_HAVE_OPENSSL
std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(path + ": cannot open file for hashing");

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha256_file: cannot allocate digest context");
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256_file: cannot initialize SHA-256");
  }
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    const std::streamsize got = in.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw std::runtime_error("sha256_file: digest update failed");
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256_file: digest finalization failed");
  }
  EVP_MD_CTX_free(ctx);

  static const char* kHex = "0123456789abcdef";
  std::string hex;
  hex.reserve(static_cast<std::size_t>(len) * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0x0f]);
  }
  return hex;
}
#else
std::string sha256_file(const std::string&) {
  throw std::runtime_error("sha256_file: built without crypto support");
}
#endif

}  // namespace kmtl
