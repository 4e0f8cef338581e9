#include "targetpred/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace targetpred {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const std::string& where) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InputError(where + ": '" + text + "' is not a number");
  }
  while (used < text.size() && (text[used] == ' ' || text[used] == '\r')) ++used;
  require(used == text.size(), where + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffULL) << (8 * (7 - b));
  return r;
}

struct FieldWriter {
  std::vector<double> buffer;
  nlohmann::json fields = nlohmann::json::array();

  void add(const std::string& name, const Matrix& m) {
    fields.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", buffer.size()}});
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) buffer.push_back(m(r, c));
  }
};

Matrix read_field(const nlohmann::json& sidecar, const std::vector<double>& data, const std::string& name) {
  for (const auto& f : sidecar.at("fields")) {
    if (f.at("name").get<std::string>() != name) continue;
    const auto rows = f.at("rows").get<Index>();
    const auto cols = f.at("cols").get<Index>();
    const auto off = f.at("offset").get<size_t>();
    require(rows >= 0 && cols >= 0 && off + static_cast<size_t>(rows * cols) <= data.size(),
            "posterior field '" + name + "' exceeds the binary file");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = data[off + static_cast<size_t>(r * cols + c)];
    return m;
  }
  throw InputError("posterior archive has no field '" + name + "'");
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

nlohmann::json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

void check_schema(const nlohmann::json& j, const std::string& what) {
  require(j.is_object() && j.contains("schema") && j["schema"].is_string(), what + " has no schema tag");
  require(j["schema"].get<std::string>() == kSchema,
          what + " has schema '" + j["schema"].get<std::string>() + "', expected '" + kSchema + "'");
}

void write_dataset(const fs::path& manifest, const Dataset& data) {
  data.validate();
  fs::path csv = manifest;
  csv.replace_extension(".csv");
  std::ostringstream os;
  os.precision(17);
  for (Index j = 0; j < data.p(); ++j) os << (j ? "," : "") << "x" << (j + 1);
  for (Index j = 0; j < data.m(); ++j) os << (data.p() + j ? "," : "") << "y" << (j + 1);
  os << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j) os << (j ? "," : "") << data.X(i, j);
    for (Index j = 0; j < data.m(); ++j) os << (data.p() + j ? "," : "") << data.Y(i, j);
    os << '\n';
  }
  write_text_file(csv, os.str());
  write_json_file(manifest, {{"schema", kSchema},
                             {"kind", "dataset"},
                             {"csv", csv.filename().string()},
                             {"n", data.n()},
                             {"p", data.p()},
                             {"m", data.m()},
                             {"tau", to_json(data.tau)}});
}

Dataset read_dataset(const fs::path& manifest) {
  const nlohmann::json j = read_json_file(manifest);
  check_schema(j, "dataset manifest '" + manifest.string() + "'");
  Dataset data;
  Index p = 0;
  Index m = 0;
  fs::path csv;
  try {
    p = j.at("p").get<Index>();
    m = j.at("m").get<Index>();
    csv = manifest.parent_path() / j.at("csv").get<std::string>();
    data.tau = vector_from_json(j.at("tau"), "tau");
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed dataset manifest: " + std::string(e.what()));
  }
  require(p >= 0 && m >= 1, "manifest needs p >= 0 and m >= 1");
  require(data.tau.size() == m, "manifest tau has " + std::to_string(data.tau.size()) + " entries, m = " +
                                    std::to_string(m));

  std::istringstream in(read_text_file(csv));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "dataset CSV '" + csv.string() + "' is empty");
  require(static_cast<Index>(split_csv_line(line).size()) == p + m,
          "CSV header has " + std::to_string(split_csv_line(line).size()) + " columns, manifest says " +
              std::to_string(p + m));
  std::vector<std::vector<double>> rows;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = csv.filename().string() + ":" + std::to_string(line_no);
    require(static_cast<Index>(cells.size()) == p + m, where + ": expected " + std::to_string(p + m) +
                                                          " values, got " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, where));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Index>(rows.size());
  data.X.resize(n, p);
  data.Y.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < p; ++c) data.X(i, c) = rows[static_cast<size_t>(i)][static_cast<size_t>(c)];
    for (Index c = 0; c < m; ++c) data.Y(i, c) = rows[static_cast<size_t>(i)][static_cast<size_t>(p + c)];
  }
  if (j.contains("n")) require(j["n"].get<Index>() == n, "manifest n does not match the CSV row count");
  data.validate();
  return data;
}

void write_posterior(const fs::path& stem, const PosteriorDrawSet& post) {
  FieldWriter w;
  nlohmann::json scalars = nlohmann::json::object();
  std::string model;
  if (post.is_conjugate()) {
    const auto& d = post.conjugate();
    model = "conjugate";
    w.add("beta", d.beta);
    scalars["noise_variance"] = d.noise_variance;
  } else {
    const auto& d = post.fosr();
    model = "fosr";
    w.add("basis", d.basis);
    w.add("alpha", d.alpha);
    w.add("theta", d.theta);
    w.add("sigma_eps", d.sigma_eps);
    w.add("sigma_gamma", d.sigma_gamma);
    w.add("sigma_alpha", d.sigma_alpha);
    w.add("xi", d.xi);
    scalars["t_dof"] = d.t_dof;
    scalars["n"] = d.n;
    scalars["q"] = d.q;
  }
  fs::path bin = stem;
  bin += ".bin";
  fs::path side = stem;
  side += ".json";
  if (bin.has_parent_path()) fs::create_directories(bin.parent_path());
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw InputError("cannot write '" + bin.string() + "'");
  for (double v : w.buffer) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw InputError("failed writing '" + bin.string() + "'");
  write_json_file(side, {{"schema", kSchema},
                         {"kind", "posterior"},
                         {"model", model},
                         {"S", post.size()},
                         {"binary", bin.filename().string()},
                         {"encoding", "float64 little-endian, row-major"},
                         {"fields", w.fields},
                         {"scalars", scalars}});
}

PosteriorDrawSet read_posterior(const fs::path& sidecar_or_stem) {
  fs::path side = sidecar_or_stem;
  if (side.extension() != ".json") side += ".json";
  const nlohmann::json j = read_json_file(side);
  check_schema(j, "posterior sidecar '" + side.string() + "'");
  try {
    const fs::path bin = side.parent_path() / j.at("binary").get<std::string>();
    const std::string raw = read_text_file(bin);
    require(raw.size() % 8 == 0, "posterior binary size is not a multiple of 8 bytes");
    std::vector<double> data(raw.size() / 8);
    for (size_t k = 0; k < data.size(); ++k) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, raw.data() + 8 * k, 8);
      data[k] = std::bit_cast<double>(to_little(bits));
    }
    const std::string model = j.at("model").get<std::string>();
    const auto& sc = j.at("scalars");
    PosteriorDrawSet post;
    if (model == "conjugate") {
      ConjugateDraws d;
      d.beta = read_field(j, data, "beta");
      d.noise_variance = sc.at("noise_variance").get<double>();
      post = PosteriorDrawSet(std::move(d));
    } else if (model == "fosr") {
      FosrDraws d;
      d.basis = read_field(j, data, "basis");
      d.alpha = read_field(j, data, "alpha");
      d.theta = read_field(j, data, "theta");
      d.sigma_eps = read_field(j, data, "sigma_eps");
      d.sigma_gamma = read_field(j, data, "sigma_gamma");
      d.sigma_alpha = read_field(j, data, "sigma_alpha");
      d.xi = read_field(j, data, "xi");
      d.t_dof = sc.at("t_dof").get<double>();
      d.n = sc.at("n").get<Index>();
      d.q = sc.at("q").get<Index>();
      const Index S = d.alpha.rows();
      const Index L = d.basis.cols();
      require(d.alpha.cols() == L * d.q && d.theta.rows() == S && d.theta.cols() == d.n * L &&
                  d.sigma_eps.size() == S && d.sigma_gamma.rows() == S && d.sigma_gamma.cols() == d.n &&
                  d.sigma_alpha.rows() == S && d.sigma_alpha.cols() == d.q && d.xi.rows() == S &&
                  d.xi.cols() == d.n,
              "posterior fields have inconsistent shapes");
      post = PosteriorDrawSet(std::move(d));
    } else {
      throw InputError("unknown posterior model '" + model + "'");
    }
    require(post.size() == j.at("S").get<Index>(), "sidecar S does not match the stored draws");
    post.check_finite();
    return post;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed posterior sidecar: " + std::string(e.what()));
  }
}

nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    const Vector row = m.row(r).transpose();
    rows.push_back(to_json(row));
  }
  return rows;
}

Vector vector_from_json(const nlohmann::json& j, const std::string& what) {
  require(j.is_array(), "'" + what + "' must be an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (size_t k = 0; k < j.size(); ++k) {
    require(j[k].is_number(), "'" + what + "' must be an array of numbers");
    v(static_cast<Index>(k)) = j[k].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  require(j.is_array(), "'" + what + "' must be an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(static_cast<Index>(j.size()), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from_json(j[r], what);
    require(row.size() == cols, "'" + what + "' rows have unequal length");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

nlohmann::json to_json(const FitResult& fit) {
  return {{"lambda", fit.lambda},
          {"delta", to_json(fit.delta)},
          {"active_set", fit.active_set},
          {"objective", fit.objective},
          {"kkt_residual", fit.kkt_residual},
          {"iterations", fit.iterations}};
}

FitResult fit_from_json(const nlohmann::json& j) {
  FitResult fit;
  try {
    fit.lambda = j.at("lambda").get<double>();
    fit.delta = vector_from_json(j.at("delta"), "delta");
    fit.active_set = j.at("active_set").get<std::vector<Index>>();
    fit.objective = j.value("objective", 0.0);
    fit.kkt_residual = j.value("kkt_residual", 0.0);
    fit.iterations = j.value("iterations", Index{0});
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed fit record: " + std::string(e.what()));
  }
  return fit;
}

nlohmann::json to_json(const LambdaPath& path) {
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : path.fits) fits.push_back(to_json(f));
  return {{"lambdas", path.lambdas}, {"fits", fits}};
}

LambdaPath path_from_json(const nlohmann::json& j) {
  LambdaPath path;
  try {
    path.lambdas = j.at("lambdas").get<std::vector<double>>();
    for (const auto& f : j.at("fits")) path.fits.push_back(fit_from_json(f));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed lambda path: " + std::string(e.what()));
  }
  require(path.lambdas.size() == path.fits.size(), "lambda path has mismatched lengths");
  return path;
}

}  // namespace targetpred
