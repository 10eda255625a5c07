#include "bidex/policy.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bidex/hash.hpp"

namespace bidex {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'B', 'D', 'X', 'C', 'K', 'P', 'T', '1'};
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 1.0;
}  // namespace

ActorCritic::ActorCritic(int obs_width_, int action_dim_,
                         const std::vector<int>& hidden, double log_std_init,
                         RngStream& rng)
    : obs_width(obs_width_), action_dim(action_dim_) {
  nn::MlpSpec actor_spec;
  actor_spec.input_width = obs_width_;
  actor_spec.hidden = hidden;
  actor_spec.output_width = action_dim_;
  actor_spec.output_activation = nn::OutputActivation::Tanh;
  actor = nn::Mlp(actor_spec, rng, 0.01, "actor");
  log_std = nn::Matrix::Constant(action_dim_, 1, log_std_init);
  nn::MlpSpec critic_spec;
  critic_spec.input_width = obs_width_;
  critic_spec.hidden = hidden;
  critic_spec.output_width = 1;
  critic = nn::Mlp(critic_spec, rng, 1.0, "critic");
}

std::vector<nn::ParamRef> ActorCritic::params() {
  std::vector<nn::ParamRef> out = actor.params();
  out.push_back({"log_std", &log_std});
  for (nn::ParamRef& p : critic.params()) out.push_back(p);
  return out;
}

nn::Matrix ActorCritic::act_mean(const nn::Matrix& obs) const {
  return actor.forward(obs);
}

nn::Matrix ActorCritic::values(const nn::Matrix& obs) const {
  return critic.forward(obs);
}

void ActorCritic::clamp_log_std() {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

StudentActor::StudentActor(int proprio_width_, int future_steps_,
                           std::size_t cloud_points_,
                           const nn::PointEncoderSpec& encoder_spec,
                           const std::vector<int>& hidden, RngStream& rng)
    : proprio_width(proprio_width_),
      future_steps(future_steps_),
      action_dim(10),
      cloud_points(cloud_points_) {
  encoder = nn::PointEncoder(encoder_spec, rng, "encoder");
  nn::MlpSpec trunk_spec;
  trunk_spec.input_width = trunk_input_width();
  trunk_spec.hidden = hidden;
  trunk_spec.output_width = action_dim;
  trunk_spec.output_activation = nn::OutputActivation::Tanh;
  trunk = nn::Mlp(trunk_spec, rng, 0.01, "student_trunk");
}

int StudentActor::trunk_input_width() const {
  return proprio_width + encoder.spec().output_width + 3 * future_steps;
}

std::vector<nn::ParamRef> StudentActor::params() {
  std::vector<nn::ParamRef> out = encoder.params();
  for (nn::ParamRef& p : trunk.params()) out.push_back(p);
  return out;
}

nn::Matrix StudentActor::act_mean(const nn::Matrix& proprio_future,
                                  const nn::Matrix& points) const {
  const Eigen::Index n = proprio_future.rows();
  const nn::Matrix feat =
      encoder.forward(points, static_cast<Eigen::Index>(cloud_points));
  nn::Matrix input(n, trunk_input_width());
  input.leftCols(proprio_width) = proprio_future.leftCols(proprio_width);
  input.middleCols(proprio_width, feat.cols()) = feat;
  if (future_steps > 0) {
    input.rightCols(3 * future_steps) =
        proprio_future.rightCols(3 * future_steps);
  }
  return trunk.forward(input);
}

namespace {

void write_checkpoint(const std::string& path, json header,
                      const std::vector<nn::ParamRef>& params) {
  json layout = json::array();
  for (const nn::ParamRef& p : params) {
    layout.push_back(json{{"name", p.name},
                          {"rows", p.value->rows()},
                          {"cols", p.value->cols()}});
  }
  header["layout"] = std::move(layout);
  header["precision"] = "fp64";
  const std::string header_bytes = header.dump();

  std::ostringstream body;
  body.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = header_bytes.size();
  body.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  body.write(header_bytes.data(),
             static_cast<std::streamsize>(header_bytes.size()));
  for (const nn::ParamRef& p : params) {
    body.write(reinterpret_cast<const char*>(p.value->data()),
               static_cast<std::streamsize>(sizeof(double) * p.value->size()));
  }
  const std::string bytes = body.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  out.close();

  std::ofstream sidecar(path + ".sha256", std::ios::binary);
  if (!sidecar) {
    throw std::runtime_error("cannot write checkpoint sidecar: " + path);
  }
  sidecar << sha256_hex(bytes) << "\n";
}

json read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_bytes(hlen, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  return json::parse(header_bytes);
}

json open_checkpoint(const std::string& path, std::ifstream& in) {
  // Verify the sidecar digest before trusting the payload.
  {
    std::ifstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream buf;
    buf << raw.rdbuf();
    std::ifstream sidecar(path + ".sha256");
    if (sidecar) {
      std::string expected;
      sidecar >> expected;
      const std::string actual = sha256_hex(buf.str());
      if (expected != actual) {
        throw std::runtime_error("checkpoint digest mismatch: " + path);
      }
    }
  }
  in.open(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_checkpoint_header(in, path);
}

void read_params(std::istream& in, const json& header,
                 std::vector<nn::ParamRef> params, const std::string& path) {
  const json& layout = header.at("layout");
  if (layout.size() != params.size()) {
    throw std::runtime_error("checkpoint layout mismatch: " + path);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& l = layout[i];
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    if (rows != params[i].value->rows() || cols != params[i].value->cols() ||
        l.at("name").get<std::string>() != params[i].name) {
      throw std::runtime_error("checkpoint layout mismatch at " +
                               params[i].name + ": " + path);
    }
    in.read(reinterpret_cast<char*>(params[i].value->data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         params[i].value->size()));
  }
  if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
}

json meta_json(const CheckpointMeta& meta) {
  json j = json::object();
  for (const auto& [k, v] : meta) j[k] = v;
  return j;
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      meta[it.key()] = it.value().get<std::string>();
    }
  }
  return meta;
}

}  // namespace

void save_actor_critic(const ActorCritic& policy, const std::string& path,
                       std::uint64_t iteration, const CheckpointMeta& meta) {
  json header;
  header["kind"] = "gaussian_actor_critic";
  header["iteration"] = iteration;
  header["obs_width"] = policy.obs_width;
  header["action_dim"] = policy.action_dim;
  header["hidden"] = policy.actor.spec().hidden;
  header["meta"] = meta_json(meta);
  write_checkpoint(path, std::move(header),
                   const_cast<ActorCritic&>(policy).params());
}

ActorCritic load_actor_critic(const std::string& path, std::uint64_t* iteration,
                              CheckpointMeta* meta) {
  std::ifstream in;
  json header = open_checkpoint(path, in);
  if (header.at("kind") != "gaussian_actor_critic") {
    throw std::runtime_error("checkpoint kind mismatch: " + path);
  }
  RngStream scratch(0, 0);
  ActorCritic policy(header.at("obs_width").get<int>(),
                     header.at("action_dim").get<int>(),
                     header.at("hidden").get<std::vector<int>>(), 0.0, scratch);
  read_params(in, header, policy.params(), path);
  if (iteration) *iteration = header.value("iteration", std::uint64_t{0});
  if (meta) *meta = meta_from_json(header.value("meta", json::object()));
  return policy;
}

void save_student(const StudentActor& student, const std::string& path,
                  std::uint64_t iteration, const CheckpointMeta& meta) {
  json header;
  header["kind"] = "student_actor";
  header["iteration"] = iteration;
  header["proprio_width"] = student.proprio_width;
  header["future_steps"] = student.future_steps;
  header["cloud_points"] = student.cloud_points;
  header["per_point"] = student.encoder.spec().per_point;
  header["post_pool"] = student.encoder.spec().post_pool;
  header["feature_dim"] = student.encoder.spec().output_width;
  header["hidden"] = student.trunk.spec().hidden;
  header["meta"] = meta_json(meta);
  write_checkpoint(path, std::move(header),
                   const_cast<StudentActor&>(student).params());
}

StudentActor load_student(const std::string& path, std::uint64_t* iteration,
                          CheckpointMeta* meta) {
  std::ifstream in;
  json header = open_checkpoint(path, in);
  if (header.at("kind") != "student_actor") {
    throw std::runtime_error("checkpoint kind mismatch: " + path);
  }
  nn::PointEncoderSpec enc;
  enc.per_point = header.at("per_point").get<std::vector<int>>();
  enc.post_pool = header.at("post_pool").get<std::vector<int>>();
  enc.output_width = header.at("feature_dim").get<int>();
  RngStream scratch(0, 0);
  StudentActor student(header.at("proprio_width").get<int>(),
                       header.at("future_steps").get<int>(),
                       header.at("cloud_points").get<std::size_t>(), enc,
                       header.at("hidden").get<std::vector<int>>(), scratch);
  read_params(in, header, student.params(), path);
  if (iteration) *iteration = header.value("iteration", std::uint64_t{0});
  if (meta) *meta = meta_from_json(header.value("meta", json::object()));
  return student;
}

std::string checkpoint_kind(const std::string& path) {
  std::ifstream in;
  json header = open_checkpoint(path, in);
  return header.at("kind").get<std::string>();
}

}  // namespace bidex
