#include "xclr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "xclr/binio.hpp"
#include "xclr/error.hpp"
#include "xclr/rng.hpp"

namespace xclr {

const std::vector<int>& Dataset::labels() const {
  require(Y.has_value(), "dataset '" + name + "' has no labels");
  return *Y;
}

void Dataset::validate() const {
  require(X.rank() == 3, "dataset X must be N x c x T");
  require(F.rank() == 2, "dataset F must be N x d");
  require(F.rows() == X.extent(0), "dataset X and F disagree on N");
  if (Y) {
    require(Y->size() == X.extent(0), "dataset Y length disagrees with N");
    require(num_classes >= 1, "labelled dataset needs a class count");
    for (int y : *Y)
      require(y >= 0 && y < num_classes,
              "label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.X = X.gather(indices);
  out.F = F.gather(indices);
  if (Y) {
    std::vector<int> y;
    y.reserve(indices.size());
    for (auto i : indices) y.push_back(Y->at(i));
    out.Y = std::move(y);
  }
  out.num_classes = num_classes;
  out.name = name;
  out.metadata = metadata;
  return out;
}

std::string to_string(SyntheticFamily f) {
  return f == SyntheticFamily::sine_mixture ? "sine_mixture" : "amplitude_classes";
}

SyntheticFamily synthetic_family_from_string(const std::string& s) {
  if (s == "sine_mixture") return SyntheticFamily::sine_mixture;
  if (s == "amplitude_classes") return SyntheticFamily::amplitude_classes;
  throw ContractError("unknown synthetic family '" + s + "'");
}

void SyntheticSpec::validate() const {
  require(n >= 2, "synthetic: need at least 2 samples");
  require(channels >= 1 && length >= 2, "synthetic: channels >= 1 and length >= 2 required");
  require(classes >= 2, "synthetic: need at least 2 classes");
  require(feature_dim == 4 * channels, "synthetic: feature_dim must be 4 * channels");
  require(noise_std >= 0.0 && std::isfinite(noise_std), "synthetic: noise_std must be >= 0");
}

Array raw_expert_features(const Array& X) {
  require(X.rank() == 3, "expert features need an N x c x T batch");
  const std::size_t n = X.extent(0), c = X.extent(1), t = X.extent(2);
  Array f = Array::matrix(n, 4 * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0.0, peak = 0.0;
      for (std::size_t k = 0; k < t; ++k) {
        mean += X(i, ch, k);
        peak = std::max(peak, std::abs(X(i, ch, k)));
      }
      mean /= static_cast<double>(t);
      double var = 0.0;
      int crossings = 0;
      double prev = X(i, ch, 0) - mean;
      for (std::size_t k = 0; k < t; ++k) {
        const double v = X(i, ch, k) - mean;
        var += v * v;
        if (k > 0 && ((prev < 0.0 && v > 0.0) || (prev > 0.0 && v < 0.0))) ++crossings;
        if (v != 0.0) prev = v;
      }
      var /= static_cast<double>(t);
      f(i, 4 * ch + 0) = mean;
      f(i, 4 * ch + 1) = std::sqrt(var);
      f(i, 4 * ch + 2) = crossings;
      f(i, 4 * ch + 3) = peak;
    }
  }
  return f;
}

Array standardize_columns(const Array& F) {
  require(F.rank() == 2, "standardize needs a matrix");
  const std::size_t n = F.rows(), d = F.cols();
  Array out = F;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += F(i, k);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (F(i, k) - mean) * (F(i, k) - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < n; ++i) out(i, k) = (F(i, k) - mean) * scale;
  }
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.n, c = spec.channels, t = spec.length;
  const int classes = static_cast<int>(spec.classes);

  // Balanced classes in a seeded order.
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % spec.classes);
  rng.shuffle(y);

  Array X({n, c, t});
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = y[i];
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (spec.family == SyntheticFamily::sine_mixture) {
        // Band k spans [1 + 4k, 3 + 4k] cycles per window, on top of a random offset.
        const double amplitude = rng.uniform(0.3, 2.0);
        const double offset = rng.uniform(-2.0, 2.0);
        for (std::size_t s = 0; s < t; ++s) X(i, ch, s) = offset;
        for (int comp = 0; comp < 2; ++comp) {
          const double cycles = rng.uniform(1.0 + 4.0 * k, 3.0 + 4.0 * k);
          const double phase = rng.uniform(0.0, two_pi);
          const double a = amplitude * rng.uniform(0.5, 1.0);
          for (std::size_t s = 0; s < t; ++s)
            X(i, ch, s) += a * std::sin(two_pi * cycles * static_cast<double>(s) /
                                            static_cast<double>(t) + phase);
        }
      } else {
        const double amplitude = static_cast<double>(k);
        const double cycles = rng.uniform(2.0, 6.0);
        const double phase = rng.uniform(0.0, two_pi);
        for (std::size_t s = 0; s < t; ++s)
          X(i, ch, s) = amplitude * std::sin(two_pi * cycles * static_cast<double>(s) /
                                                 static_cast<double>(t) + phase);
      }
      if (spec.noise_std > 0.0)
        for (std::size_t s = 0; s < t; ++s) X(i, ch, s) += spec.noise_std * rng.normal();
    }
  }

  Dataset ds;
  ds.F = standardize_columns(raw_expert_features(X));
  ds.X = std::move(X);
  ds.Y = std::move(y);
  ds.num_classes = classes;
  ds.name = to_string(spec.family);
  ds.metadata = {{"family", to_string(spec.family)},
                 {"seed", std::to_string(spec.seed)},
                 {"noise_std", std::to_string(spec.noise_std)}};
  return ds;
}

// ---------------------------------------------------------------- binary format

namespace {
constexpr char kDatasetMagic[5] = {'X', 'C', 'L', 'R', 'D'};
}

void save_binary(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(DataErrorCode::io, "cannot write " + path.string());
  using namespace binio;
  os.write(kDatasetMagic, 5);
  put_u32(os, kDatasetVersion);
  put_u32(os, static_cast<std::uint32_t>(ds.size()));
  put_u32(os, static_cast<std::uint32_t>(ds.channels()));
  put_u32(os, static_cast<std::uint32_t>(ds.length()));
  put_u32(os, static_cast<std::uint32_t>(ds.feature_dim()));
  put_u8(os, ds.has_labels() ? 1 : 0);
  put_u32(os, static_cast<std::uint32_t>(ds.num_classes));
  for (double v : ds.X.values()) put_f64(os, v);
  for (double v : ds.F.values()) put_f64(os, v);
  if (ds.Y)
    for (int y : *ds.Y) put_u32(os, static_cast<std::uint32_t>(y));
  if (!os) throw DataError(DataErrorCode::io, "write failed for " + path.string());
}

Dataset load_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataErrorCode::io, "cannot open " + path.string());
  using namespace binio;
  const std::string where = path.string();
  auto truncated = [&](const char* part) {
    return DataError(DataErrorCode::truncated, where + ": truncated " + part);
  };
  char magic[5];
  if (!get_bytes(is, magic, 5)) throw truncated("header");
  if (std::memcmp(magic, kDatasetMagic, 5) != 0)
    throw DataError(DataErrorCode::bad_magic, where + ": not an XCLRD dataset");
  std::uint32_t version, n, c, t, d, classes;
  std::uint8_t has_labels;
  if (!get_u32(is, version)) throw truncated("header");
  if (version != kDatasetVersion)
    throw DataError(DataErrorCode::bad_version,
                    where + ": unsupported dataset version " + std::to_string(version));
  if (!(get_u32(is, n) && get_u32(is, c) && get_u32(is, t) && get_u32(is, d) &&
        get_u8(is, has_labels) && get_u32(is, classes)))
    throw truncated("header");
  if (n == 0 || c == 0 || t == 0 || d == 0 || has_labels > 1)
    throw DataError(DataErrorCode::inconsistent, where + ": invalid header extents");

  // The file size must match the header before anything large is allocated.
  const auto header_end = is.tellg();
  is.seekg(0, std::ios::end);
  const auto file_end = is.tellg();
  is.seekg(header_end);
  const std::uintmax_t expected = (std::uintmax_t{n} * c * t + std::uintmax_t{n} * d) * 8 +
                                  (has_labels ? std::uintmax_t{n} * 4 : 0);
  const std::uintmax_t available = static_cast<std::uintmax_t>(file_end - header_end);
  if (available < expected) throw truncated("payload");
  if (available > expected)
    throw DataError(DataErrorCode::inconsistent, where + ": trailing bytes after payload");

  std::vector<double> xv(std::size_t{n} * c * t), fv(std::size_t{n} * d);
  for (auto& v : xv)
    if (!get_f64(is, v)) throw truncated("X");
  for (auto& v : fv)
    if (!get_f64(is, v)) throw truncated("F");
  Dataset ds;
  try {
    ds.X = Array({n, c, t}, std::move(xv));
    ds.F = Array({n, d}, std::move(fv));
  } catch (const ContractError& e) {
    throw DataError(DataErrorCode::inconsistent, where + ": " + e.what());
  }
  ds.num_classes = static_cast<int>(classes);
  if (has_labels) {
    std::vector<int> y(n);
    for (auto& v : y) {
      std::uint32_t u;
      if (!get_u32(is, u)) throw truncated("Y");
      v = static_cast<int>(u);
    }
    ds.Y = std::move(y);
  }
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw DataError(DataErrorCode::inconsistent, where + ": " + e.what());
  }
  ds.name = path.stem().string();
  return ds;
}

// ---------------------------------------------------------------- CSV layout

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_matrix_csv(const std::filesystem::path& file, const std::vector<std::string>& header,
                      std::size_t rows, std::size_t cols, const double* values) {
  std::ofstream os(file, std::ios::trunc);
  if (!os) throw DataError(DataErrorCode::io, "cannot write " + file.string());
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols; ++k) os << (k ? "," : "") << format_double(values[i * cols + k]);
    os << '\n';
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<double> read_matrix_csv(const std::filesystem::path& file, std::size_t rows,
                                    std::size_t cols) {
  std::ifstream is(file);
  if (!is) throw DataError(DataErrorCode::io, "cannot open " + file.string());
  const std::string where = file.filename().string();
  std::string line;
  if (!std::getline(is, line))
    throw DataError(DataErrorCode::truncated, where + ": missing header row");
  const auto header = split_csv_line(line);
  if (header.size() != cols)
    throw DataError(DataErrorCode::inconsistent,
                    where + ": header has " + std::to_string(header.size()) +
                        " columns, expected " + std::to_string(cols));
  std::vector<double> values;
  values.reserve(rows * cols);
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols)
      throw DataError(DataErrorCode::inconsistent,
                      where + ": row " + std::to_string(row + 1) + " has " +
                          std::to_string(cells.size()) + " columns, expected " +
                          std::to_string(cols));
    for (const auto& cell : cells) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw DataError(DataErrorCode::parse,
                        where + ": cannot parse '" + cell + "' in row " + std::to_string(row + 1));
      values.push_back(v);
    }
    ++row;
  }
  if (row != rows)
    throw DataError(row < rows ? DataErrorCode::truncated : DataErrorCode::inconsistent,
                    where + ": " + std::to_string(row) + " rows, expected " + std::to_string(rows));
  return values;
}

}  // namespace

void save_csv_dir(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(DataErrorCode::io, "cannot create " + dir.string());
  const std::size_t n = ds.size(), c = ds.channels(), t = ds.length(), d = ds.feature_dim();

  std::vector<std::string> xh;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < t; ++k)
      xh.push_back("x_c" + std::to_string(ch) + "_t" + std::to_string(k));
  write_matrix_csv(dir / "X.csv", xh, n, c * t, ds.X.data());
  std::vector<std::string> fh;
  for (std::size_t k = 0; k < d; ++k) fh.push_back("f" + std::to_string(k));
  write_matrix_csv(dir / "F.csv", fh, n, d, ds.F.data());
  if (ds.Y) {
    std::ofstream os(dir / "Y.csv", std::ios::trunc);
    os << "y\n";
    for (int y : *ds.Y) os << y << '\n';
  } else {
    std::filesystem::remove(dir / "Y.csv", ec);
  }

  nlohmann::json meta = {{"name", ds.name},       {"N", n},
                         {"c", c},                {"T", t},
                         {"d", d},                {"C", ds.num_classes},
                         {"has_labels", ds.has_labels()}, {"metadata", ds.metadata}};
  std::ofstream os(dir / "meta.json", std::ios::trunc);
  os << meta.dump(2) << '\n';
}

Dataset load_csv_dir(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "meta.json");
  if (!ms) throw DataError(DataErrorCode::io, "cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  std::size_t n, c, t, d;
  bool has_labels;
  Dataset ds;
  try {
    ms >> meta;
    n = meta.at("N").get<std::size_t>();
    c = meta.at("c").get<std::size_t>();
    t = meta.at("T").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    has_labels = meta.at("has_labels").get<bool>();
    ds.num_classes = meta.at("C").get<int>();
    ds.name = meta.value("name", std::string{});
    if (meta.contains("metadata"))
      ds.metadata = meta.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::parse, "meta.json: " + std::string(e.what()));
  }
  if (n == 0 || c == 0 || t == 0 || d == 0)
    throw DataError(DataErrorCode::inconsistent, "meta.json: extents must be positive");

  try {
    ds.X = Array({n, c, t}, read_matrix_csv(dir / "X.csv", n, c * t));
    ds.F = Array({n, d}, read_matrix_csv(dir / "F.csv", n, d));
  } catch (const ContractError& e) {
    throw DataError(DataErrorCode::inconsistent, dir.string() + ": " + e.what());
  }
  if (has_labels) {
    const auto raw = read_matrix_csv(dir / "Y.csv", n, 1);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (raw[i] != std::floor(raw[i]))
        throw DataError(DataErrorCode::parse, "Y.csv: non-integer label in row " + std::to_string(i + 1));
      y[i] = static_cast<int>(raw[i]);
    }
    ds.Y = std::move(y);
  }
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw DataError(DataErrorCode::inconsistent, dir.string() + ": " + e.what());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path) || !path.has_extension())
    save_csv_dir(ds, path);
  else
    save_binary(ds, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_csv_dir(path);
  return load_binary(path);
}

// ---------------------------------------------------------------- splits and labels

SplitIndices split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
  const auto first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  require(first >= 1 && first < n, "split would leave one part empty");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  SplitIndices s;
  s.first.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(first));
  s.second.assign(idx.begin() + static_cast<std::ptrdiff_t>(first), idx.end());
  std::sort(s.first.begin(), s.first.end());
  std::sort(s.second.begin(), s.second.end());
  return s;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double fraction, std::uint64_t seed) {
  const auto s = split_indices(ds.size(), fraction, seed);
  return {ds.subset(s.first), ds.subset(s.second)};
}

std::vector<std::size_t> subsample_labels(const Dataset& ds, double fraction, std::uint64_t seed) {
  require(ds.has_labels(), "subsample_labels: dataset has no labels");
  require(fraction > 0.0 && fraction <= 1.0, "label fraction must lie in (0, 1]");
  const auto& y = ds.labels();
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& [label, members] : by_class) {
    // The small slack absorbs representation error such as 0.1 * 100 > 10.
    const double want = std::ceil(fraction * static_cast<double>(members.size()) - 1e-9);
    const std::size_t take = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, members.size());
    rng.shuffle(members);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Array one_hot(const std::vector<int>& labels, int num_classes) {
  require(num_classes >= 1, "one_hot needs a positive class count");
  require(!labels.empty(), "one_hot needs at least one label");
  Array out = Array::matrix(labels.size(), static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes,
            "label " + std::to_string(labels[i]) + " out of range for " +
                std::to_string(num_classes) + " classes");
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

}  // namespace xclr
