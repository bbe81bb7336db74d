#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loadfuse/model_store.hpp"
#include "loadfuse/synthetic.hpp"

using namespace loadfuse;

namespace {

TrainedNodeModel fixture_model() {
  SyntheticSpec spec;
  spec.n_nodes = 1;
  spec.n_days = 3;
  auto gen = generate_synthetic(spec, 77);
  TrainConfig cfg;
  cfg.layers = 2;
  cfg.inducing = 6;
  cfg.iterations = 40;
  cfg.minibatch = 48;
  cfg.mc_samples = 1;
  cfg.seed = 13;
  cfg.predict_samples = 30;
  return train_fast_node_model(gen.dataset, "node01", 0, 288, cfg);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("model store round-trips every parameter") {
  auto m = fixture_model();
  const std::string dir = "/tmp/loadfuse_store_test/m1";
  std::filesystem::remove_all("/tmp/loadfuse_store_test");
  save_model(dir, m);
  auto r = load_model(dir);

  REQUIRE(r.node_id == m.node_id);
  REQUIRE(r.scale == m.scale);
  REQUIRE(r.seed == m.seed);
  REQUIRE(r.data_fingerprint == m.data_fingerprint);
  REQUIRE(r.predict_samples == m.predict_samples);
  REQUIRE(r.recipe.norm_span_hours == m.recipe.norm_span_hours);
  REQUIRE(r.model.log_noise_variance == m.model.log_noise_variance);
  REQUIRE(r.model.y_standardizer.mean == m.model.y_standardizer.mean);
  REQUIRE(r.model.depth() == m.model.depth());
  for (int l = 0; l < m.model.depth(); ++l) {
    REQUIRE(r.model.layers[l].Z == m.model.layers[l].Z);
    REQUIRE(r.model.layers[l].q_mean == m.model.layers[l].q_mean);
    REQUIRE(r.model.layers[l].q_cov_strict_lower ==
            m.model.layers[l].q_cov_strict_lower);
    REQUIRE(r.model.layers[l].q_log_diag == m.model.layers[l].q_log_diag);
    REQUIRE(r.model.layers[l].kernel.log_variance ==
            m.model.layers[l].kernel.log_variance);
    REQUIRE(r.model.layers[l].kernel.log_lengthscales ==
            m.model.layers[l].kernel.log_lengthscales);
    REQUIRE(r.model.layers[l].mean_function == m.model.layers[l].mean_function);
  }

  // loaded model predicts identically
  auto p1 = predict_fast_range(m, 288, 24);
  auto p2 = predict_fast_range(r, 288, 24);
  REQUIRE(p1.mean_kw == p2.mean_kw);
  REQUIRE(p1.var_kw2 == p2.var_kw2);
}

TEST_CASE("saving twice produces identical bytes") {
  auto m = fixture_model();
  save_model("/tmp/loadfuse_store_test/a", m);
  save_model("/tmp/loadfuse_store_test/b", m);
  REQUIRE(slurp("/tmp/loadfuse_store_test/a/params.bin") ==
          slurp("/tmp/loadfuse_store_test/b/params.bin"));
  REQUIRE(slurp("/tmp/loadfuse_store_test/a/manifest.json") ==
          slurp("/tmp/loadfuse_store_test/b/manifest.json"));
}

TEST_CASE("corrupt stores are rejected") {
  REQUIRE_THROWS_AS(load_model("/tmp/loadfuse_store_test/nope"), IoError);
  const std::string dir = "/tmp/loadfuse_store_test/bad";
  auto m = fixture_model();
  save_model(dir, m);
  {
    std::ofstream bin(dir + "/params.bin", std::ios::binary);
    bin << "garbage";
  }
  REQUIRE_THROWS_AS(load_model(dir), ParseError);
}
