#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadfuse/pipeline.hpp"

namespace loadfuse {

// Model store: one directory per model holding a plain-text manifest
// (dims, hyperparameters, seed, data fingerprint) and the parameters in a
// little-endian binary layout:
//
//   u32  magic "LFGP"      u32  version (1)
//   u64  n_layers          f64  log_noise_variance
//   f64  std_mean          f64  std_sd
//   per layer:
//     u64 M, u64 d, u32 mean_function, f64 log_variance, f64 jitter
//     f64[d]   log_lengthscales
//     f64[M*d] Z                (row major)
//     f64[M]   q_mean
//     f64[M*M] q_cov_strict_lower
//     f64[M]   q_log_diag

namespace detail {

constexpr std::uint32_t kModelMagic = 0x5047464CU;  // "LFGP"
constexpr std::uint32_t kModelVersion = 1;

inline void put_u32(std::ostream& o, std::uint32_t v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::ostream& o, std::uint64_t v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_f64(std::ostream& o, double v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_mat(std::ostream& o, const Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) put_f64(o, m(i, j));
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline double get_f64(std::istream& in) {
  double v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
inline Eigen::MatrixXd get_mat(std::istream& in, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = get_f64(in);
  return m;
}

}  // namespace detail

inline void save_model(const std::string& dir, const TrainedNodeModel& m) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw IoError("cannot write params.bin under '" + dir + "'");
    detail::put_u32(bin, detail::kModelMagic);
    detail::put_u32(bin, detail::kModelVersion);
    detail::put_u64(bin, m.model.layers.size());
    detail::put_f64(bin, m.model.log_noise_variance);
    detail::put_f64(bin, m.model.y_standardizer.mean);
    detail::put_f64(bin, m.model.y_standardizer.sd);
    for (const auto& layer : m.model.layers) {
      detail::put_u64(bin, layer.inducing_count());
      detail::put_u64(bin, layer.input_dim());
      detail::put_u32(bin,
                      layer.mean_function == MeanFunction::Zero ? 0U : 1U);
      detail::put_f64(bin, layer.kernel.log_variance);
      detail::put_f64(bin, layer.kernel.jitter);
      detail::put_mat(bin, layer.kernel.log_lengthscales);
      detail::put_mat(bin, layer.Z);
      detail::put_mat(bin, layer.q_mean);
      detail::put_mat(bin, layer.q_cov_strict_lower);
      detail::put_mat(bin, layer.q_log_diag);
    }
  }

  nlohmann::json j;
  j["format"] = "loadfuse-model";
  j["version"] = detail::kModelVersion;
  j["node_id"] = m.node_id;
  j["scale"] = to_string(m.scale);
  j["seed"] = m.seed;
  j["data_fingerprint"] = m.data_fingerprint;
  j["predict_samples"] = m.predict_samples;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : m.model.layers) {
    const Eigen::VectorXd ls = layer.kernel.lengthscales();
    j["layers"].push_back({{"inducing", layer.inducing_count()},
                           {"input_dim", layer.input_dim()},
                           {"mean_function",
                            layer.mean_function == MeanFunction::Zero
                                ? "zero"
                                : "identity_skip"},
                           {"variance", layer.kernel.variance()},
                           {"lengthscales",
                            std::vector<double>(ls.data(), ls.data() + ls.size())}});
  }
  j["noise_variance"] = m.model.noise_variance();
  j["standardizer"] = {{"mean", m.model.y_standardizer.mean},
                       {"sd", m.model.y_standardizer.sd}};
  j["features"] = {{"delta_t_hours", m.recipe.delta_t_hours},
                   {"T", m.recipe.T},
                   {"epoch_day_offset_hours", m.recipe.epoch_day_offset_hours},
                   {"norm_span_hours", m.recipe.norm_span_hours}};

  std::ofstream manifest(fs::path(dir) / "manifest.json");
  if (!manifest) throw IoError("cannot write manifest.json under '" + dir + "'");
  manifest << j.dump(2) << '\n';
}

inline TrainedNodeModel load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.json");
  if (!manifest) throw IoError("cannot read manifest.json under '" + dir + "'");
  nlohmann::json j;
  try {
    manifest >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json: " + std::string(e.what()));
  }

  TrainedNodeModel m;
  m.node_id = j.at("node_id").get<std::string>();
  m.scale = j.at("scale").get<std::string>() == "fast" ? TimeScale::Fast
                                                       : TimeScale::Slow;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.data_fingerprint = j.at("data_fingerprint").get<std::uint64_t>();
  m.predict_samples = j.at("predict_samples").get<int>();
  const auto& f = j.at("features");
  m.recipe.delta_t_hours = f.at("delta_t_hours").get<double>();
  m.recipe.T = f.at("T").get<int>();
  m.recipe.epoch_day_offset_hours =
      f.at("epoch_day_offset_hours").get<double>();
  m.recipe.norm_span_hours = f.at("norm_span_hours").get<double>();

  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw IoError("cannot read params.bin under '" + dir + "'");
  if (detail::get_u32(bin) != detail::kModelMagic)
    throw ParseError("params.bin: bad magic");
  if (detail::get_u32(bin) != detail::kModelVersion)
    throw ParseError("params.bin: unsupported version");
  const std::uint64_t n_layers = detail::get_u64(bin);
  m.model.log_noise_variance = detail::get_f64(bin);
  m.model.y_standardizer.mean = detail::get_f64(bin);
  m.model.y_standardizer.sd = detail::get_f64(bin);
  for (std::uint64_t l = 0; l < n_layers; ++l) {
    const int M = static_cast<int>(detail::get_u64(bin));
    const int d = static_cast<int>(detail::get_u64(bin));
    const std::uint32_t mf = detail::get_u32(bin);
    SVGPLayer layer;
    layer.kernel.log_variance = detail::get_f64(bin);
    layer.kernel.jitter = detail::get_f64(bin);
    layer.kernel.log_lengthscales = detail::get_mat(bin, d, 1);
    layer.Z = detail::get_mat(bin, M, d);
    layer.q_mean = detail::get_mat(bin, M, 1);
    layer.q_cov_strict_lower = detail::get_mat(bin, M, M);
    layer.q_log_diag = detail::get_mat(bin, M, 1);
    layer.mean_function =
        mf == 0 ? MeanFunction::Zero : MeanFunction::IdentitySkip;
    m.model.layers.push_back(std::move(layer));
  }
  if (!bin) throw ParseError("params.bin: truncated");
  m.model.validate();
  return m;
}

}  // namespace loadfuse
