#include "sgdn/checkpoint.hpp"

#include <json.hpp>

#include "sgdn/errors.hpp"

namespace sgdn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json matrix_to_json(const Matrix& m) {
  ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<Real> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = data;
  return j;
}

Matrix matrix_from_json(const json& j) {
  try {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<Real>>();
    if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
      throw SchemaViolation("checkpoint array has the wrong element count");
    }
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaViolation(std::string("bad checkpoint array: ") + e.what());
  }
}

ordered_json matrices_to_json(const std::vector<Matrix>& ms) {
  ordered_json j = ordered_json::array();
  for (const auto& m : ms) j.push_back(matrix_to_json(m));
  return j;
}

std::vector<Matrix> matrices_from_json(const json& j) {
  if (!j.is_array()) throw SchemaViolation("expected an array of matrices");
  std::vector<Matrix> out;
  for (const auto& item : j) out.push_back(matrix_from_json(item));
  return out;
}

}  // namespace

Checkpoint make_checkpoint(const SgdnModel& model, const Trainer* trainer) {
  Checkpoint c;
  c.model_config = model.config();
  const ParameterStore& p = model.params();
  for (Index i = 0; i < p.size(); ++i) {
    c.names.push_back(p.name(static_cast<int>(i)));
    c.values.push_back(p.value(static_cast<int>(i)));
  }
  if (trainer) {
    c.training = TrainingState{trainer->config(), trainer->step_count(), trainer->first_moment(),
                               trainer->second_moment(), trainer->rng_state()};
  }
  return c;
}

void load_parameters(SgdnModel& model, const Checkpoint& checkpoint) {
  ParameterStore& p = model.params();
  if (static_cast<Index>(checkpoint.names.size()) != p.size() || checkpoint.values.size() != checkpoint.names.size()) {
    throw SchemaViolation("checkpoint parameter count does not match the model");
  }
  for (std::size_t i = 0; i < checkpoint.names.size(); ++i) {
    const int id = p.find(checkpoint.names[i]);
    if (id < 0) throw SchemaViolation("checkpoint parameter not in model: " + checkpoint.names[i]);
    const Matrix& v = checkpoint.values[i];
    if (v.rows() != p.value(id).rows() || v.cols() != p.value(id).cols()) {
      throw SchemaViolation("checkpoint parameter has the wrong shape: " + checkpoint.names[i]);
    }
    p.value(id) = v;
  }
}

SgdnModel model_from_checkpoint(const Checkpoint& checkpoint) {
  SgdnModel model = SgdnModel::create(checkpoint.model_config, 0);
  load_parameters(model, checkpoint);
  return model;
}

std::string checkpoint_to_json(const Checkpoint& c) {
  ordered_json j;
  j["format"] = "sgdn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["model"] = to_json(c.model_config);
  ordered_json params = ordered_json::array();
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    ordered_json entry = matrix_to_json(c.values[i]);
    entry["name"] = c.names[i];
    params.push_back(std::move(entry));
  }
  j["parameters"] = std::move(params);
  if (c.training) {
    ordered_json t;
    t["config"] = to_json(c.training->config);
    t["step"] = c.training->step;
    t["first_moment"] = matrices_to_json(c.training->first_moment);
    t["second_moment"] = matrices_to_json(c.training->second_moment);
    t["rng_state"] = c.training->rng_state;
    j["training"] = std::move(t);
  }
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaViolation(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "sgdn-checkpoint") throw SchemaViolation("not a checkpoint file");
  if (j.value("version", 0) != kCheckpointVersion) throw SchemaViolation("unsupported checkpoint version");
  if (!j.contains("model") || !j.contains("parameters") || !j["parameters"].is_array()) {
    throw SchemaViolation("checkpoint is missing model or parameters");
  }
  Checkpoint c;
  try {
    c.model_config = model_config_from_json(j["model"]);
  } catch (const ConfigInvalid& e) {
    throw SchemaViolation(std::string("checkpoint model config: ") + e.what());
  }
  for (const auto& entry : j["parameters"]) {
    if (!entry.contains("name") || !entry["name"].is_string()) throw SchemaViolation("parameter without a name");
    c.names.push_back(entry["name"].get<std::string>());
    c.values.push_back(matrix_from_json(entry));
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    TrainingState s;
    try {
      s.config = train_config_from_json(t.at("config"));
      s.step = t.at("step").get<int>();
      s.rng_state = t.at("rng_state").get<std::string>();
    } catch (const json::exception& e) {
      throw SchemaViolation(std::string("bad training state: ") + e.what());
    } catch (const ConfigInvalid& e) {
      throw SchemaViolation(std::string("bad training config: ") + e.what());
    }
    s.first_moment = matrices_from_json(t.value("first_moment", json::array()));
    s.second_moment = matrices_from_json(t.value("second_moment", json::array()));
    c.training = std::move(s);
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text_file(path)); }

}  // namespace sgdn
