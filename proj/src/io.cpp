#include "stsep/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stsep/error.hpp"

namespace stsep {

namespace {

constexpr std::size_t kHeaderBytes = 48;
constexpr std::uint32_t kFlagRowMajor = 1u << 0;
constexpr std::uint32_t kFlagGrid = 1u << 1;
constexpr std::uint32_t kFlagTimes = 1u << 2;

static_assert(std::endian::native == std::endian::little,
              "matrix file I/O assumes a little-endian host");

std::vector<char> ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

template <class T>
T ReadLe(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <class T>
void WriteLe(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

bool IsCsv(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv";
}

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double ParseDouble(const std::string& token, const fs::path& path, std::size_t line) {
  const std::string t = Trim(token);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::kMalformedHeader,
                path.string() + ":" + std::to_string(line) + ": cannot parse '" + t + "'");
  }
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFiniteValue,
                path.string() + ":" + std::to_string(line) + ": non-finite value");
  }
  return v;
}

}  // namespace

DataMatrix ReadMatrix(const fs::path& path) {
  return IsCsv(path) ? ReadMatrixCsv(path) : ReadMatrixBinary(path);
}

void WriteMatrix(const DataMatrix& data, const fs::path& path) {
  if (IsCsv(path)) {
    WriteMatrixCsv(data, path);
  } else {
    WriteMatrixBinary(data, path);
  }
}

DataMatrix ReadMatrixBinary(const fs::path& path) {
  const std::vector<char> buf = ReadAll(path);
  if (buf.size() < kHeaderBytes) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": truncated header");
  }
  if (std::memcmp(buf.data(), kMatrixMagic, sizeof(kMatrixMagic)) != 0) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad magic");
  }
  const auto version = ReadLe<std::uint32_t>(buf, 8);
  if (version != kMatrixVersion) {
    throw Error(ErrorCode::kMalformedHeader,
                path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto flags = ReadLe<std::uint32_t>(buf, 12);
  const auto rows = ReadLe<std::uint64_t>(buf, 16);
  const auto cols = ReadLe<std::uint64_t>(buf, 24);
  const auto grid_rows = ReadLe<std::uint64_t>(buf, 32);
  const auto grid_cols = ReadLe<std::uint64_t>(buf, 40);
  if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": invalid dimensions");
  }
  const bool has_times = (flags & kFlagTimes) != 0;
  const std::uint64_t n_values = rows * cols + (has_times ? rows : 0);
  if (buf.size() != kHeaderBytes + 8 * n_values) {
    throw Error(ErrorCode::kSizeMismatch,
                path.string() + ": expected " + std::to_string(8 * n_values) +
                    " payload bytes, found " + std::to_string(buf.size() - kHeaderBytes));
  }

  DataMatrix data;
  const Index r = static_cast<Index>(rows);
  const Index c = static_cast<Index>(cols);
  data.values.resize(r, c);
  const char* payload = buf.data() + kHeaderBytes;
  if (flags & kFlagRowMajor) {
    std::memcpy(data.values.data(), payload, 8 * rows * cols);
  } else {
    Eigen::MatrixXd col_major(r, c);
    std::memcpy(col_major.data(), payload, 8 * rows * cols);
    data.values = col_major;
  }
  if (has_times) {
    Vector t(r);
    std::memcpy(t.data(), payload + 8 * rows * cols, 8 * rows);
    data.observed_times = std::move(t);
  }
  if (flags & kFlagGrid) {
    if (grid_rows * grid_cols != cols) {
      throw Error(ErrorCode::kMalformedHeader, path.string() + ": grid does not match columns");
    }
    data.grid = GridGeometry::Lattice(static_cast<Index>(grid_rows), static_cast<Index>(grid_cols));
  } else {
    data.grid = GridGeometry::Flat(c);
  }
  if (!data.values.allFinite() || (data.observed_times && !data.observed_times->allFinite())) {
    throw Error(ErrorCode::kNonFiniteValue, path.string() + ": non-finite value in payload");
  }
  return data;
}

void WriteMatrixBinary(const DataMatrix& data, const fs::path& path) {
  data.Validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMatrixMagic, sizeof(kMatrixMagic));
  std::uint32_t flags = kFlagRowMajor;
  if (data.grid.lattice) flags |= kFlagGrid;
  if (data.observed_times) flags |= kFlagTimes;
  WriteLe<std::uint32_t>(out, kMatrixVersion);
  WriteLe<std::uint32_t>(out, flags);
  WriteLe<std::uint64_t>(out, static_cast<std::uint64_t>(data.values.rows()));
  WriteLe<std::uint64_t>(out, static_cast<std::uint64_t>(data.values.cols()));
  WriteLe<std::uint64_t>(out, data.grid.lattice ? static_cast<std::uint64_t>(data.grid.rows) : 0);
  WriteLe<std::uint64_t>(out, data.grid.lattice ? static_cast<std::uint64_t>(data.grid.cols) : 0);
  out.write(reinterpret_cast<const char*>(data.values.data()),
            static_cast<std::streamsize>(8 * data.values.size()));
  if (data.observed_times) {
    out.write(reinterpret_cast<const char*>(data.observed_times->data()),
              static_cast<std::streamsize>(8 * data.observed_times->size()));
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

DataMatrix ReadMatrixCsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::optional<GridGeometry> grid;
  bool times_first = false;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = Trim(std::string_view(t).substr(1));
      if (body.rfind("grid:", 0) == 0) {
        const std::string spec = Trim(std::string_view(body).substr(5));
        const auto x = spec.find('x');
        if (x == std::string::npos) {
          throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad grid directive");
        }
        const double h = ParseDouble(spec.substr(0, x), path, line_no);
        const double w = ParseDouble(spec.substr(x + 1), path, line_no);
        if (h < 1 || w < 1 || h != std::floor(h) || w != std::floor(w)) {
          throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad grid directive");
        }
        grid = GridGeometry::Lattice(static_cast<Index>(h), static_cast<Index>(w));
      } else if (body.rfind("times:", 0) == 0) {
        times_first = Trim(std::string_view(body).substr(6)) == "first-column";
      }
      continue;
    }
    std::vector<double> vals;
    std::stringstream ss(t);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(ParseDouble(tok, path, line_no));
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw Error(ErrorCode::kSizeMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(vals));
  }
  const std::size_t offset = times_first ? 1 : 0;
  if (rows.empty() || rows.front().size() <= offset) {
    throw Error(ErrorCode::kSizeMismatch, path.string() + ": no data");
  }
  DataMatrix data;
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.front().size() - offset);
  data.values.resize(r, c);
  Vector times(r);
  for (Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (times_first) times[i] = row[0];
    for (Index j = 0; j < c; ++j) data.values(i, j) = row[static_cast<std::size_t>(j) + offset];
  }
  if (times_first) data.observed_times = times;
  if (grid) {
    if (grid->size() != c) {
      throw Error(ErrorCode::kMalformedHeader, path.string() + ": grid does not match columns");
    }
    data.grid = *grid;
  } else {
    data.grid = GridGeometry::Flat(c);
  }
  return data;
}

void WriteMatrixCsv(const DataMatrix& data, const fs::path& path) {
  data.Validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  if (data.grid.lattice) out << "# grid: " << data.grid.rows << "x" << data.grid.cols << "\n";
  if (data.observed_times) out << "# times: first-column\n";
  for (Index i = 0; i < data.values.rows(); ++i) {
    bool first = true;
    if (data.observed_times) {
      out << FormatDouble((*data.observed_times)[i]);
      first = false;
    }
    for (Index j = 0; j < data.values.cols(); ++j) {
      if (!first) out << ',';
      out << FormatDouble(data.values(i, j));
      first = false;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Json LoadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": " + e.what());
  }
}

void SaveJson(const Json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string FileDigest(const fs::path& path) {
  const std::vector<char> buf = ReadAll(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : buf) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

Json ToJson(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix MatrixFromJson(const Json& j) {
  const Index r = static_cast<Index>(j.size());
  const Index c = r > 0 ? static_cast<Index>(j.at(0).size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != c) {
      throw Error(ErrorCode::kSizeMismatch, "ragged matrix in JSON document");
    }
    for (Index k = 0; k < c; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Json ToJson(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector VectorFromJson(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Json ToJson(const GridGeometry& g) {
  return Json{{"rows", g.rows}, {"cols", g.cols}, {"lattice", g.lattice}};
}

GridGeometry GridFromJson(const Json& j) {
  return GridGeometry{j.at("rows").get<Index>(), j.at("cols").get<Index>(),
                      j.at("lattice").get<bool>()};
}

Json ToJson(const Hyperparams& hp) {
  return Json{{"sigma", hp.sigma},
              {"lambda", hp.lambda},
              {"n_sources", hp.n_sources},
              {"n_features_rff", hp.n_features_rff},
              {"control_points", ToJson(hp.control_points)},
              {"n_mc", hp.n_mc},
              {"jitter", hp.jitter}};
}

Hyperparams HyperparamsFromJson(const Json& j, Hyperparams d) {
  d.sigma = j.value("sigma", d.sigma);
  d.lambda = j.value("lambda", d.lambda);
  d.n_sources = j.value("n_sources", d.n_sources);
  d.n_features_rff = j.value("n_features_rff", d.n_features_rff);
  if (j.contains("control_points")) {
    const Json& cp = j.at("control_points");
    d.control_points = cp.is_number_integer()
                           ? Hyperparams::DefaultControlPoints(cp.get<int>())
                           : VectorFromJson(cp);
  }
  d.n_mc = j.value("n_mc", d.n_mc);
  d.jitter = j.value("jitter", d.jitter);
  return d;
}

Json ToJson(const FitConfig& c) {
  return Json{{"max_iters", c.max_iters},     {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},             {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},       {"window", c.window},
              {"tolerance", c.tolerance},     {"seed", c.seed},
              {"learn_sigma", c.learn_sigma}, {"learn_times", c.learn_times},
              {"report_mc", c.report_mc},     {"threads", c.threads}};
}

FitConfig FitConfigFromJson(const Json& j, FitConfig d) {
  d.max_iters = j.value("max_iters", d.max_iters);
  d.learning_rate = j.value("learning_rate", d.learning_rate);
  d.beta1 = j.value("beta1", d.beta1);
  d.beta2 = j.value("beta2", d.beta2);
  d.adam_eps = j.value("adam_eps", d.adam_eps);
  d.window = j.value("window", d.window);
  d.tolerance = j.value("tolerance", d.tolerance);
  d.seed = j.value("seed", d.seed);
  d.learn_sigma = j.value("learn_sigma", d.learn_sigma);
  d.learn_times = j.value("learn_times", d.learn_times);
  d.report_mc = j.value("report_mc", d.report_mc);
  d.threads = j.value("threads", d.threads);
  return d;
}

Json ToJson(const SynthConfig& c) {
  Json centers = Json::array();
  for (const auto& [r, col] : c.ResolvedCenters()) centers.push_back(Json::array({r, col}));
  return Json{{"n_sources", c.n_sources},   {"alphas", c.alphas},
              {"centers", centers},         {"widths", c.ResolvedWidths()},
              {"grid_rows", c.grid_rows},   {"grid_cols", c.grid_cols},
              {"n_timepoints", c.n_timepoints}, {"n_images", c.n_images},
              {"noise_std", c.noise_std},   {"noise_fraction", c.noise_fraction},
              {"hide_times", c.hide_times}, {"seed", c.seed}};
}

SynthConfig SynthConfigFromJson(const Json& j) {
  SynthConfig c;
  c.n_sources = j.value("n_sources", c.n_sources);
  c.alphas = j.contains("alphas") ? j.at("alphas").get<std::vector<double>>()
                                  : SynthConfig::DefaultAlphas(c.n_sources);
  if (j.contains("centers")) {
    for (const Json& p : j.at("centers")) c.centers.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<double>>();
  c.grid_rows = j.value("grid_rows", c.grid_rows);
  c.grid_cols = j.value("grid_cols", c.grid_cols);
  c.n_timepoints = j.value("n_timepoints", c.n_timepoints);
  c.n_images = j.value("n_images", c.n_images);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.noise_fraction = j.value("noise_fraction", c.noise_fraction);
  c.hide_times = j.value("hide_times", c.hide_times);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

Json ToJson(const GroundTruth& gt) {
  return Json{{"alphas", gt.alphas},         {"maps", ToJson(gt.maps)},
              {"timepoints", ToJson(gt.timepoints)}, {"times", ToJson(gt.times)},
              {"noise_std", gt.noise_std},   {"noise_seed", gt.noise_seed},
              {"grid", ToJson(gt.grid)}};
}

GroundTruth GroundTruthFromJson(const Json& j) {
  GroundTruth gt;
  gt.alphas = j.at("alphas").get<std::vector<double>>();
  gt.maps = MatrixFromJson(j.at("maps"));
  gt.timepoints = VectorFromJson(j.at("timepoints"));
  gt.times = VectorFromJson(j.at("times"));
  gt.noise_std = j.at("noise_std").get<double>();
  gt.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  gt.grid = GridFromJson(j.at("grid"));
  return gt;
}

Json ToJson(const ModelState& st) {
  const TemporalPosterior& tp = st.temporal;
  return Json{
      {"temporal",
       {{"r", ToJson(tp.r)},
        {"log_p", ToJson(tp.log_p)},
        {"m", ToJson(tp.m)},
        {"log_s", ToJson(tp.log_s)},
        {"log_l", ToJson(tp.log_l)},
        {"phases", ToJson(tp.phases)}}},
      {"spatial",
       {{"mu", ToJson(st.spatial.mu)},
        {"log_alpha", st.spatial.log_alpha},
        {"log_beta", st.spatial.log_beta},
        {"grid", ToJson(st.spatial.grid)}}},
      {"shifts", {{"t", ToJson(st.shifts.t)}}},
      {"log_sigma", st.log_sigma},
  };
}

ModelState StateFromJson(const Json& j) {
  ModelState st;
  const Json& t = j.at("temporal");
  st.temporal.r = MatrixFromJson(t.at("r"));
  st.temporal.log_p = MatrixFromJson(t.at("log_p"));
  st.temporal.m = MatrixFromJson(t.at("m"));
  st.temporal.log_s = MatrixFromJson(t.at("log_s"));
  st.temporal.log_l = VectorFromJson(t.at("log_l"));
  st.temporal.phases = VectorFromJson(t.at("phases"));
  const Json& s = j.at("spatial");
  st.spatial.mu = MatrixFromJson(s.at("mu"));
  st.spatial.log_alpha = s.at("log_alpha").get<double>();
  st.spatial.log_beta = s.at("log_beta").get<double>();
  st.spatial.grid = GridFromJson(s.at("grid"));
  st.shifts.t = VectorFromJson(j.at("shifts").at("t"));
  st.log_sigma = j.at("log_sigma").get<double>();
  st.temporal.Validate();
  st.spatial.Validate();
  return st;
}

Json ToJson(const Checkpoint& ck) {
  return Json{{"format", "stsep-checkpoint"},
              {"version", 1},
              {"seed", ck.seed},
              {"hyperparams", ToJson(ck.hp)},
              {"state", ToJson(ck.state)}};
}

Checkpoint CheckpointFromJson(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "stsep-checkpoint" || j.at("version").get<int>() != 1) {
      throw Error(ErrorCode::kMalformedHeader, "not a version-1 stsep checkpoint");
    }
    Checkpoint ck;
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.hp = HyperparamsFromJson(j.at("hyperparams"));
    ck.state = StateFromJson(j.at("state"));
    return ck;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const Checkpoint& ck, const fs::path& path) { SaveJson(ToJson(ck), path); }

Checkpoint LoadCheckpoint(const fs::path& path) { return CheckpointFromJson(LoadJson(path)); }

void WriteTraceCsv(const std::vector<ElboBreakdown>& trace, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const ElboBreakdown& e = trace[i];
    rows.push_back({std::to_string(i), FormatDouble(e.loglik), FormatDouble(e.constraint),
                    FormatDouble(e.kl_spatial), FormatDouble(e.kl_omega),
                    FormatDouble(e.kl_weights), FormatDouble(e.total())});
  }
  WriteCsv(path, {"iteration", "loglik", "constraint", "kl_spatial", "kl_omega", "kl_weights", "total"},
           rows);
}

void WriteCsv(const fs::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace stsep
