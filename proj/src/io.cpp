#include "calibr8/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "calibr8/error.hpp"

namespace calibr8::io {

std::string format_real(double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

const Json& field(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigurationError("expected an object", path);
  auto it = j.find(key);
  if (it == j.end()) throw ConfigurationError("missing required field", path.empty() ? key : path + "." + key);
  return *it;
}

double get_real(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigurationError("expected a number", path);
}

long get_int(const Json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<long>();
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<long>(v);
  }
  throw ConfigurationError("expected an integer", path);
}

std::size_t get_count(const Json& j, const std::string& path) {
  long v = get_int(j, path);
  if (v < 0) throw ConfigurationError("expected a nonnegative integer", path);
  return static_cast<std::size_t>(v);
}

bool get_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigurationError("expected true or false", path);
  return j.get<bool>();
}

std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigurationError("expected a string", path);
  return j.get<std::string>();
}

Vector get_vector(const Json& j, const std::string& path) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigurationError("expected an array of numbers", path);
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = get_real(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

Matrix get_matrix(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigurationError("expected an array of rows", path);
  if (j.empty()) return Matrix(0, 0);
  Matrix m;
  for (std::size_t r = 0; r < j.size(); ++r) {
    Vector row = get_vector(j[r], path + "[" + std::to_string(r) + "]");
    if (r == 0) m.resize(static_cast<Eigen::Index>(j.size()), row.size());
    if (row.size() != m.cols()) throw ConfigurationError("rows have different lengths", path);
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

void check_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigurationError("expected an object", path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigurationError("unknown field", path.empty() ? it.key() : path + "." + it.key());
  }
}

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

// ------------------------------------------------------------ space

Json to_json(const ParameterSpace& space) {
  Json a = Json::array();
  for (const auto& d : space.dims()) {
    Json p = {{"kind", d.prior.kind == PriorSpec::Kind::uniform ? "uniform" : "truncated-normal"}};
    if (d.prior.kind == PriorSpec::Kind::truncated_normal) {
      p["mean"] = d.prior.mean;
      p["sd"] = d.prior.sd;
    }
    a.push_back({{"name", d.name}, {"lower", d.lower}, {"upper", d.upper}, {"prior", p}});
  }
  return a;
}

ParameterSpace parameter_space_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigurationError("expected a non-empty array of dimensions", path);
  std::vector<Dimension> dims;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    check_keys(j[i], {"name", "lower", "upper", "prior"}, p);
    Dimension d;
    d.name = get_string(field(j[i], "name", p), p + ".name");
    d.lower = get_real(field(j[i], "lower", p), p + ".lower");
    d.upper = get_real(field(j[i], "upper", p), p + ".upper");
    if (j[i].contains("prior")) {
      const Json& pr = j[i]["prior"];
      const std::string pp = p + ".prior";
      check_keys(pr, {"kind", "mean", "sd"}, pp);
      std::string kind = get_string(field(pr, "kind", pp), pp + ".kind");
      if (kind == "uniform") {
        d.prior = PriorSpec::uniform();
      } else if (kind == "truncated-normal") {
        d.prior = PriorSpec::truncated_normal(get_real(field(pr, "mean", pp), pp + ".mean"),
                                              get_real(field(pr, "sd", pp), pp + ".sd"));
      } else {
        throw ConfigurationError("prior kind must be 'uniform' or 'truncated-normal'", pp + ".kind");
      }
    }
    dims.push_back(d);
  }
  try {
    return ParameterSpace(std::move(dims));
  } catch (const ParameterError& e) {
    throw ConfigurationError(e.what(), path);
  }
}

// ------------------------------------------------------------ observations

namespace {

Json operator_to_json(const ObservationOperator& op) {
  if (op.is_identity()) {
    Json j = {{"kind", "identity"}};
    if (op.size()) j["size"] = op.size();
    return j;
  }
  Json comps = Json::array();
  for (const auto& c : op.components()) {
    switch (c.kind) {
      case OperatorComponent::Kind::index: comps.push_back({{"kind", "index"}, {"index", c.index}}); break;
      case OperatorComponent::Kind::mean:
        comps.push_back({{"kind", "mean"}, {"begin", c.begin}, {"end", c.end}});
        break;
      case OperatorComponent::Kind::sum:
        comps.push_back({{"kind", "sum"}, {"begin", c.begin}, {"end", c.end}});
        break;
      case OperatorComponent::Kind::affine:
        comps.push_back({{"kind", "affine"}, {"weights", to_json(c.weights)}, {"offset", c.offset}});
        break;
    }
  }
  return {{"kind", "components"}, {"components", comps}};
}

ObservationOperator operator_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"kind", "size", "components"}, path);
  std::string kind = j.contains("kind") ? get_string(j["kind"], path + ".kind") : "components";
  if (kind == "identity") return ObservationOperator::identity(j.contains("size") ? get_count(j["size"], path + ".size") : 0);
  if (kind != "components") throw ConfigurationError("operator kind must be 'identity' or 'components'", path + ".kind");
  const Json& cs = field(j, "components", path);
  if (!cs.is_array()) throw ConfigurationError("expected an array", path + ".components");
  std::vector<OperatorComponent> comps;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string p = path + ".components[" + std::to_string(i) + "]";
    const Json& c = cs[i];
    check_keys(c, {"kind", "index", "begin", "end", "weights", "offset"}, p);
    std::string k = get_string(field(c, "kind", p), p + ".kind");
    if (k == "index") {
      comps.push_back(OperatorComponent::select(get_count(field(c, "index", p), p + ".index")));
    } else if (k == "mean" || k == "sum") {
      auto b = get_count(field(c, "begin", p), p + ".begin"), e = get_count(field(c, "end", p), p + ".end");
      comps.push_back(k == "mean" ? OperatorComponent::window_mean(b, e) : OperatorComponent::window_sum(b, e));
    } else if (k == "affine") {
      comps.push_back(OperatorComponent::affine(get_vector(field(c, "weights", p), p + ".weights"),
                                                c.contains("offset") ? get_real(c["offset"], p + ".offset") : 0.0));
    } else {
      throw ConfigurationError("component kind must be index, mean, sum or affine", p + ".kind");
    }
  }
  return ObservationOperator(std::move(comps));
}

}  // namespace

Json to_json(const ObservationSet& obs) {
  Json model = {{"kind", to_string(obs.model.kind)}};
  switch (obs.model.kind) {
    case ObservationModel::Kind::gaussian_iid: model["sigma"] = to_json(obs.model.sigma); break;
    case ObservationModel::Kind::student_t:
      model["sigma"] = to_json(obs.model.sigma);
      model["nu"] = obs.model.nu;
      break;
    case ObservationModel::Kind::gaussian_correlated: model["covariance"] = to_json(obs.model.covariance); break;
    case ObservationModel::Kind::perfect_match: break;
  }
  if (!obs.model.free_params.empty()) model["free_params"] = obs.model.free_params;
  Json j = {{"y", to_json(obs.y)}, {"operator", operator_to_json(obs.op)}, {"model", model}};
  if (obs.locations) j["locations"] = to_json(*obs.locations);
  if (obs.control.dim()) j["control"] = to_json(obs.control.values);
  return j;
}

ObservationSet observation_set_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"y", "operator", "model", "locations", "control"}, path);
  ObservationSet o;
  o.y = get_vector(field(j, "y", path), path + ".y");
  if (j.contains("operator")) o.op = operator_from_json(j["operator"], path + ".operator");
  const std::string mp = path + ".model";
  const Json& m = field(j, "model", path);
  check_keys(m, {"kind", "sigma", "covariance", "nu", "free_params"}, mp);
  auto kind = [&] {
    try {
      return model_kind_from_string(get_string(field(m, "kind", mp), mp + ".kind"));
    } catch (const ConfigurationError& e) {
      if (!e.path().empty() && e.path() != "model.kind") throw;
      throw ConfigurationError("unknown observation model", mp + ".kind");
    }
  }();
  o.model.kind = kind;
  if (m.contains("free_params")) {
    if (!m["free_params"].is_array()) throw ConfigurationError("expected an array of names", mp + ".free_params");
    for (std::size_t i = 0; i < m["free_params"].size(); ++i)
      o.model.free_params.push_back(get_string(m["free_params"][i], mp + ".free_params[" + std::to_string(i) + "]"));
  }
  bool free_sigma = std::find(o.model.free_params.begin(), o.model.free_params.end(), "sigma") != o.model.free_params.end();
  if ((kind == ObservationModel::Kind::gaussian_iid || kind == ObservationModel::Kind::student_t) && !free_sigma)
    o.model.sigma = get_vector(field(m, "sigma", mp), mp + ".sigma");
  if (kind == ObservationModel::Kind::student_t && m.contains("nu")) o.model.nu = get_real(m["nu"], mp + ".nu");
  if (kind == ObservationModel::Kind::gaussian_correlated)
    o.model.covariance = get_matrix(field(m, "covariance", mp), mp + ".covariance");
  if (j.contains("locations")) {
    const Json& l = j["locations"];
    if (l.is_array() && !l.empty() && l[0].is_number()) {
      Vector v = get_vector(l, path + ".locations");
      o.locations = Matrix(v);
    } else {
      o.locations = get_matrix(l, path + ".locations");
    }
  }
  if (j.contains("control")) o.control.values = get_vector(j["control"], path + ".control");
  try {
    o.validate();
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(e.what(), e.path().empty() ? path : path + "." + e.path());
  } catch (const NumericError& e) {
    throw ConfigurationError(e.what(), mp);
  }
  return o;
}

// ------------------------------------------------------------ gp

Json to_json(const GPModel& gp) {
  const auto& k = gp.kernel();
  const auto& m = gp.mean();
  const auto& tf = gp.transform();
  Json mean = {{"kind", to_string(m.kind)}, {"intercept", m.intercept}};
  if (m.kind == MeanFunction::Kind::linear) mean["slope"] = to_json(m.slope);
  return {{"kernel",
           {{"kind", to_string(k.kind)},
            {"lengthscales", to_json(k.lengthscales)},
            {"signal_variance", k.signal_variance},
            {"jitter", k.jitter}}},
          {"mean", mean},
          {"noise_variance", gp.noise_variance()},
          {"transform",
           {{"x_offset", to_json(tf.x_offset)},
            {"x_scale", to_json(tf.x_scale)},
            {"y_offset", tf.y_offset},
            {"y_scale", tf.y_scale}}},
          {"training", {{"X", to_json(gp.training_inputs())}, {"Y", to_json(gp.training_outputs())}}}};
}

GPModel gp_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"kernel", "mean", "noise_variance", "transform", "training"}, path);
  const Json& kj = field(j, "kernel", path);
  const std::string kp = path + ".kernel";
  Kernel k;
  try {
    k.kind = kernel_kind_from_string(get_string(field(kj, "kind", kp), kp + ".kind"));
  } catch (const ConfigurationError&) {
    throw ConfigurationError("unknown kernel", kp + ".kind");
  }
  k.lengthscales = get_vector(field(kj, "lengthscales", kp), kp + ".lengthscales");
  k.signal_variance = get_real(field(kj, "signal_variance", kp), kp + ".signal_variance");
  if (kj.contains("jitter")) k.jitter = get_real(kj["jitter"], kp + ".jitter");

  MeanFunction mf;
  if (j.contains("mean")) {
    const Json& mj = j["mean"];
    const std::string mp = path + ".mean";
    mf.kind = mean_kind_from_string(get_string(field(mj, "kind", mp), mp + ".kind"));
    if (mj.contains("intercept")) mf.intercept = get_real(mj["intercept"], mp + ".intercept");
    if (mj.contains("slope")) mf.slope = get_vector(mj["slope"], mp + ".slope");
  }
  double noise = j.contains("noise_variance") ? get_real(j["noise_variance"], path + ".noise_variance") : 0.0;

  const auto d = static_cast<std::size_t>(k.lengthscales.size());
  GPModel::Transform tf = GPModel::Transform::identity(d);
  if (j.contains("transform")) {
    const Json& t = j["transform"];
    const std::string tp = path + ".transform";
    tf.x_offset = get_vector(field(t, "x_offset", tp), tp + ".x_offset");
    tf.x_scale = get_vector(field(t, "x_scale", tp), tp + ".x_scale");
    tf.y_offset = get_real(field(t, "y_offset", tp), tp + ".y_offset");
    tf.y_scale = get_real(field(t, "y_scale", tp), tp + ".y_scale");
  }
  GPModel prior(k, mf, noise, tf);
  if (!j.contains("training")) return prior;
  const Json& tr = j["training"];
  Matrix X = get_matrix(field(tr, "X", path + ".training"), path + ".training.X");
  Vector Y = get_vector(field(tr, "Y", path + ".training"), path + ".training.Y");
  if (X.rows() == 0) return prior;
  return prior.conditioned(X, Y);
}

// ------------------------------------------------------------ csv

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

bool parse_real(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec == std::errc() && p == s.data() + s.size()) return true;
  if (s == "inf" || s == "+inf") { v = std::numeric_limits<double>::infinity(); return true; }
  if (s == "-inf") { v = -std::numeric_limits<double>::infinity(); return true; }
  if (s == "nan") { v = std::numeric_limits<double>::quiet_NaN(); return true; }
  return false;
}

void write_row(std::ostream& os, const double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << format_real(v[i]);
  os << '\n';
}

}  // namespace

void write_particles_csv(std::ostream& os, const ParticleSet& p, const std::vector<std::string>& names) {
  if (names.size() != p.dim()) throw ParameterError("particle CSV needs one name per dimension");
  for (const auto& n : names) os << "x_" << n << ',';
  os << "weight,log_post\n";
  std::vector<double> row(p.dim() + 2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < p.dim(); ++k) row[k] = p.points(r, static_cast<Eigen::Index>(k));
    row[p.dim()] = p.weights[r];
    row[p.dim() + 1] = p.log_post.size() ? p.log_post[r] : std::numeric_limits<double>::quiet_NaN();
    write_row(os, row.data(), row.size());
  }
}

ParticleFile read_particles_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigurationError("empty particle file", "header");
  auto header = split(line);
  ParticleFile out;
  std::size_t wcol = header.size(), lcol = header.size();
  std::vector<std::size_t> xcols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h == "weight") wcol = i;
    else if (h == "log_post") lcol = i;
    else if (h.rfind("x_", 0) == 0 && h.size() > 2) {
      xcols.push_back(i);
      out.names.push_back(h.substr(2));
    } else {
      throw ConfigurationError("unexpected column '" + h + "'", "header[" + std::to_string(i) + "]");
    }
  }
  if (wcol == header.size()) throw ConfigurationError("missing 'weight' column", "header.weight");
  if (xcols.empty()) throw ConfigurationError("no x_<name> parameter columns", "header");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigurationError("expected " + std::to_string(header.size()) + " columns",
                               "row " + std::to_string(lineno));
    std::vector<double> v(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!parse_real(cells[i], v[i]))
        throw ConfigurationError("not a number: '" + cells[i] + "'", "row " + std::to_string(lineno));
    rows.push_back(std::move(v));
  }
  const auto N = static_cast<Eigen::Index>(rows.size()), d = static_cast<Eigen::Index>(xcols.size());
  ParticleSet& p = out.particles;
  p.points.resize(N, d);
  p.weights.resize(N);
  p.log_post.resize(lcol == header.size() ? 0 : N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < d; ++k) p.points(i, k) = r[xcols[static_cast<std::size_t>(k)]];
    p.weights[i] = r[wcol];
    if (lcol != header.size()) p.log_post[i] = r[lcol];
  }
  if (N > 0) {
    if ((p.weights.array() < 0).any() || !p.weights.allFinite())
      throw ConfigurationError("weights must be finite and nonnegative", "weight");
    double s = p.weights.sum();
    if (!(s > 0)) throw ConfigurationError("weights sum to zero", "weight");
    p.weights /= s;
  }
  p.meta.method = "file";
  return out;
}

void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header, const Matrix& m) {
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
  }
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    write_row(os, row.data(), row.size());
  }
}

MatrixFile read_matrix_csv(std::istream& is) {
  MatrixFile out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    std::vector<double> v(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_real(cells[i], v[i]);
    if (!numeric) {
      if (rows.empty() && out.header.empty()) {
        out.header = cells;
        continue;
      }
      throw ConfigurationError("non-numeric cell", "row " + std::to_string(lineno));
    }
    if (!rows.empty() && v.size() != rows[0].size())
      throw ConfigurationError("inconsistent column count", "row " + std::to_string(lineno));
    if (!out.header.empty() && v.size() != out.header.size())
      throw ConfigurationError("row length does not match the header", "row " + std::to_string(lineno));
    rows.push_back(std::move(v));
  }
  const auto cols = rows.empty() ? static_cast<Eigen::Index>(out.header.size()) : static_cast<Eigen::Index>(rows[0].size());
  out.values.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file '" + path + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace calibr8::io
