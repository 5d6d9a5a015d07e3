#include "filtstab/model_io.hpp"

#include <fstream>
#include <sstream>

namespace filtstab {

Matrix matrix_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty()) {
    throw ModelError(std::string("model: field '") + field + "' must be a nonempty array of rows");
  }
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j.at(0).is_array() ? j.at(0).size() : 0);
  if (cols == 0) throw ModelError(std::string("model: field '") + field + "' rows must be nonempty arrays");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      std::ostringstream os;
      os << "model: field '" << field << "' row " << r << " has the wrong length";
      throw ModelError(os.str());
    }
    for (Index c = 0; c < cols; ++c) {
      const auto& v = row.at(static_cast<std::size_t>(c));
      if (!v.is_number()) {
        std::ostringstream os;
        os << "model: field '" << field << "' entry (" << r << ", " << c << ") is not a number";
        throw ModelError(os.str());
      }
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

Vector vector_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw ModelError(std::string("field '") + field + "' must be a nonempty array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ModelError(std::string("field '") + field + "' has a non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::json to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Generator generator_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ModelError("model: expected a JSON object");
  if (!j.contains("dim") || !j["dim"].is_number_integer() || j["dim"].get<long long>() < 1) {
    throw ModelError("model: 'dim' must be a positive integer");
  }
  const auto d = static_cast<Index>(j["dim"].get<long long>());
  if (!j.contains("rates")) throw ModelError("model: missing 'rates'");
  Matrix rates = matrix_from_json(j["rates"], "rates");
  if (rates.rows() != d || rates.cols() != d) {
    std::ostringstream os;
    os << "model: 'rates' must be " << d << " x " << d;
    throw ModelError(os.str());
  }
  return Generator::from_rates(std::move(rates));
}

FilterModel model_from_json(const nlohmann::json& j) {
  Generator A = generator_from_json(j);
  if (!j.contains("h")) throw ModelError("model: missing 'h'");
  if (!j.contains("R")) throw ModelError("model: missing 'R'");
  Matrix h = matrix_from_json(j["h"], "h");
  if (h.rows() != A.dim()) {
    std::ostringstream os;
    os << "model: 'h' must have " << A.dim() << " rows";
    throw ModelError(os.str());
  }
  Matrix R = matrix_from_json(j["R"], "R");
  return FilterModel::create(std::move(A), ObservationModel::create(std::move(h), std::move(R)));
}

nlohmann::json model_to_json(const FilterModel& model) {
  return {{"dim", model.dim()},
          {"rates", to_json(model.generator.rates())},
          {"h", to_json(model.observation.h())},
          {"R", to_json(model.observation.noise_cov())}};
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

FilterModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace filtstab
