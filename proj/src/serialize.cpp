#include "sbmot/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sbmot/errors.hpp"

namespace sbm {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

double checked_number(const json& j, const char* what) {
  if (!j.is_number())
    throw InvalidInputError(std::string("expected a number for ") + what);
  const double v = j.get<double>();
  if (!std::isfinite(v))
    throw InvalidInputError(std::string("non-finite value for ") + what);
  return v;
}

json parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InvalidInputError("malformed JSON");
  return j;
}

}  // namespace

std::string measure_to_json(const DiscreteMeasure& m) {
  std::ostringstream os;
  os << "{\"dim\":" << m.dim() << ",\"atoms\":[";
  for (int i = 0; i < m.size(); ++i) {
    if (i) os << ",";
    os << "[";
    for (int k = 0; k < m.dim(); ++k) {
      if (k) os << ",";
      os << fmt17(m.atoms()(i, k));
    }
    os << "]";
  }
  os << "],\"weights\":[";
  for (int i = 0; i < m.size(); ++i) {
    if (i) os << ",";
    os << fmt17(m.weights()(i));
  }
  os << "]}";
  return os.str();
}

DiscreteMeasure measure_from_json(const std::string& text) {
  json j = parse(text);
  if (!j.is_object() || !j.contains("dim") || !j.contains("atoms") ||
      !j.contains("weights"))
    throw InvalidInputError("measure JSON: missing dim/atoms/weights");
  if (!j["dim"].is_number_integer())
    throw InvalidInputError("measure JSON: dim must be an integer");
  const int dim = j["dim"].get<int>();
  const auto& atoms = j["atoms"];
  const auto& weights = j["weights"];
  if (!atoms.is_array() || !weights.is_array() ||
      atoms.size() != weights.size())
    throw InvalidInputError("measure JSON: atoms/weights must be equal-length arrays");
  const int n = static_cast<int>(atoms.size());
  if (n == 0) throw InvalidInputError("measure JSON: empty measure");
  Mat a(n, dim > 0 ? dim : 1);
  Vec w(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = atoms[i];
    if (!row.is_array() || static_cast<int>(row.size()) != dim)
      throw InvalidInputError("measure JSON: atom row has wrong arity");
    for (int k = 0; k < dim; ++k) a(i, k) = checked_number(row[k], "atom");
    w(i) = checked_number(weights[i], "weight");
  }
  return DiscreteMeasure(dim, a, w);
}

std::string coupling_to_json(const Coupling& c) {
  std::ostringstream os;
  os << "{\"rows\":" << c.rows() << ",\"cols\":" << c.cols() << ",\"mass\":[";
  for (int i = 0; i < c.rows(); ++i) {
    if (i) os << ",";
    os << "[";
    for (int j = 0; j < c.cols(); ++j) {
      if (j) os << ",";
      os << fmt17(c.mass()(i, j));
    }
    os << "]";
  }
  os << "]}";
  return os.str();
}

Coupling coupling_from_json(const std::string& text) {
  json j = parse(text);
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
      !j.contains("mass"))
    throw InvalidInputError("coupling JSON: missing rows/cols/mass");
  const int rows = j["rows"].get<int>();
  const int cols = j["cols"].get<int>();
  const auto& mass = j["mass"];
  if (!mass.is_array() || static_cast<int>(mass.size()) != rows)
    throw InvalidInputError("coupling JSON: mass has wrong row count");
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = mass[i];
    if (!row.is_array() || static_cast<int>(row.size()) != cols)
      throw InvalidInputError("coupling JSON: mass row has wrong arity");
    for (int k = 0; k < cols; ++k) m(i, k) = checked_number(row[k], "mass");
  }
  return Coupling(rows, cols, m);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open for writing: " + path);
  f << content;
  if (!f) throw InvalidInputError("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void save_measure(const DiscreteMeasure& m, const std::string& path) {
  write_file(path, measure_to_json(m) + "\n");
}

DiscreteMeasure load_measure(const std::string& path) {
  return measure_from_json(read_file(path));
}

}  // namespace sbm
