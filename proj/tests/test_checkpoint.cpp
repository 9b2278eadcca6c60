#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "radarsim/checkpoint.hpp"
#include "radarsim/io.hpp"
#include "radarsim/models.hpp"
#include "radarsim/nn/adam.hpp"
#include "radarsim/rng.hpp"

using namespace radarsim;
namespace fs = std::filesystem;

namespace {

nn::Tensor<float> item(float v) {
  nn::Tensor<float> t(1, 1, 1, 1);
  t.v[0] = v;
  return t;
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("radarsim_ckpt_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelParameters tiny_models(uint64_t seed) {
  GeneratorConfig gen;
  gen.residual_blocks = 1;
  gen.base_channels = 4;
  gen.downsampling_stages = 1;
  DiscriminatorConfig disc;
  disc.layers = 2;
  disc.base_channels = 4;
  SegmenterConfig seg;
  seg.levels = 2;
  seg.initial_features = 2;
  return init_parameters(gen, disc, seg, seed);
}

// Random grads plus one optimizer step per group gives every serialized field
// (values, both moments, step counts) a nontrivial value.
void perturb(ModelParameters& mp, uint64_t seed) {
  Rng rng = Rng::stream(seed, "perturb");
  const nn::AdamConfig cfg;
  auto kick = [&](std::vector<nn::Param<float>*> ps, nn::AdamGroup& g) {
    for (auto* p : ps)
      for (float& gv : p->grad.v) gv = static_cast<float>(rng.uniform(-1.0, 1.0));
    nn::adam_step(ps, cfg, g);
  };
  kick(mp.theta_x(), mp.adam_theta_x);
  kick(mp.theta_x(), mp.adam_theta_x);
  kick(mp.theta_w(), mp.adam_theta_w);
  kick(mp.beta_x(), mp.adam_beta_x);
  kick(mp.beta_w(), mp.adam_beta_w);
  kick(mp.alpha(), mp.adam_alpha);
  mp.step = 123;
}

void check_equal(ModelParameters& a, ModelParameters& b) {
  REQUIRE(a.step == b.step);
  auto cmp = [](std::vector<nn::Param<float>*> pa, std::vector<nn::Param<float>*> pb) {
    REQUIRE(pa.size() == pb.size());
    for (size_t k = 0; k < pa.size(); ++k) {
      REQUIRE(pa[k]->name == pb[k]->name);
      CHECK(pa[k]->val.v == pb[k]->val.v);
      CHECK(pa[k]->m.v == pb[k]->m.v);
      CHECK(pa[k]->v.v == pb[k]->v.v);
    }
  };
  cmp(a.theta_x(), b.theta_x());
  cmp(a.theta_w(), b.theta_w());
  cmp(a.beta_x(), b.beta_x());
  cmp(a.beta_w(), b.beta_w());
  cmp(a.alpha(), b.alpha());
  CHECK(a.adam_theta_x.t == b.adam_theta_x.t);
  CHECK(a.adam_theta_w.t == b.adam_theta_w.t);
  CHECK(a.adam_beta_x.t == b.adam_beta_x.t);
  CHECK(a.adam_beta_w.t == b.adam_beta_w.t);
  CHECK(a.adam_alpha.t == b.adam_alpha.t);
}

}  // namespace

TEST_CASE("pool passes items through until it fills", "[checkpoint]") {
  ImagePool pool(50, Rng::stream(1, "pool-fill"));
  for (int k = 0; k < 50; ++k) {
    const nn::Tensor<float> out = pool.query(item(static_cast<float>(k)));
    CHECK(out.v[0] == static_cast<float>(k));
    CHECK(pool.stored().size() == static_cast<size_t>(k + 1));
  }
  CHECK(pool.capacity() == 50);
  CHECK_THROWS_AS(ImagePool(0, Rng::stream(1, "bad")), std::invalid_argument);
}

TEST_CASE("full pool swaps half the queries and never grows", "[checkpoint]") {
  ImagePool pool(50, Rng::stream(2, "pool-rate"));
  for (int k = 0; k < 50; ++k) pool.query(item(static_cast<float>(k)));

  const int queries = 10000;
  int swaps = 0;
  int size_violations = 0;
  std::set<float> returned_old;
  for (int k = 0; k < queries; ++k) {
    const float v = static_cast<float>(1000 + k);
    const nn::Tensor<float> out = pool.query(item(v));
    if (pool.stored().size() != 50) ++size_violations;
    if (out.v[0] != v) {
      ++swaps;
      // A swapped-out item left the pool for good, so it can only come back
      // once; every value fed in was unique.
      CHECK(returned_old.insert(out.v[0]).second);
    }
  }
  CHECK(size_violations == 0);
  const double rate = static_cast<double>(swaps) / queries;
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
}

TEST_CASE("pool behavior is a pure function of its seed", "[checkpoint]") {
  ImagePool a(3, Rng::stream(7, "pool-det"));
  ImagePool b(3, Rng::stream(7, "pool-det"));
  for (int k = 0; k < 40; ++k) {
    const float v = static_cast<float>(k);
    CHECK(a.query(item(v)).v[0] == b.query(item(v)).v[0]);
  }
  ImagePool c(3, Rng::stream(8, "pool-det"));
  bool all_same = true;
  for (int k = 0; k < 40; ++k) {
    const float v = static_cast<float>(k);
    ImagePool& probe = c;
    if (probe.query(item(v)).v[0] != a.query(item(v)).v[0]) all_same = false;
  }
  (void)all_same;  // different seeds usually diverge, but that is not a contract
}

TEST_CASE("checkpoints restore training state bit for bit", "[checkpoint]") {
  const fs::path dir = temp_dir("roundtrip");
  const fs::path path = dir / "ckpt_123.bin";
  const std::string config = "{\"profile\":\"desk\",\"seed\":3}";

  ModelParameters mp = tiny_models(3);
  perturb(mp, 77);
  ImagePool px(2, Rng::stream(3, "pool-x"));
  ImagePool pw(2, Rng::stream(3, "pool-w"));
  for (int k = 0; k < 6; ++k) {
    px.query(item(static_cast<float>(k)));
    pw.query(item(static_cast<float>(10 + k)));
  }
  save_checkpoint(path, mp, px, pw, config);
  REQUIRE(fs::exists(path));
  CHECK(!fs::exists(dir / "ckpt_123.bin.tmp"));

  ModelParameters back = tiny_models(99);
  ImagePool bx(50, Rng::stream(9, "other"));
  ImagePool bw(50, Rng::stream(9, "other"));
  const std::string echoed = load_checkpoint(path, back, bx, bw);
  CHECK(echoed == config);
  check_equal(mp, back);
  CHECK(bx.capacity() == px.capacity());
  CHECK(bw.capacity() == pw.capacity());
  REQUIRE(bx.stored().size() == px.stored().size());
  for (size_t k = 0; k < px.stored().size(); ++k) CHECK(bx.stored()[k].v == px.stored()[k].v);
  CHECK(bx.rng().state() == px.rng().state());
  CHECK(bw.rng().state() == pw.rng().state());

  // Restored pools continue the exact swap sequence of the originals.
  for (int k = 0; k < 20; ++k) {
    const float v = static_cast<float>(100 + k);
    CHECK(bx.query(item(v)).v[0] == px.query(item(v)).v[0]);
  }

  CHECK(peek_checkpoint_config(path) == config);
  const fs::path sidecar = dir / "ckpt_123.json";
  REQUIRE(fs::exists(sidecar));
  std::ifstream side(sidecar);
  std::string side_text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
  CHECK(side_text == config + "\n");

  // Re-saving the loaded state reproduces the file exactly.
  const fs::path path2 = dir / "ckpt_again.bin";
  save_checkpoint(path2, back, bx, bw, echoed);
  // The pools advanced above; rebuild them from the file for the byte compare.
  ModelParameters back2 = tiny_models(98);
  ImagePool cx(1, Rng::stream(1, "t"));
  ImagePool cw(1, Rng::stream(1, "t"));
  load_checkpoint(path, back2, cx, cw);
  save_checkpoint(path2, back2, cx, cw, config);
  CHECK(read_bytes(path) == read_bytes(path2));

  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading rejects damage and mismatches", "[checkpoint]") {
  const fs::path dir = temp_dir("damage");
  const fs::path path = dir / "ckpt.bin";
  ModelParameters mp = tiny_models(5);
  ImagePool px(2, Rng::stream(5, "pool-x"));
  ImagePool pw(2, Rng::stream(5, "pool-w"));
  save_checkpoint(path, mp, px, pw, "{}");

  ModelParameters sink = tiny_models(6);
  ImagePool sx(2, Rng::stream(6, "s"));
  ImagePool sw(2, Rng::stream(6, "s"));

  SECTION("missing file") {
    CHECK_THROWS_WITH(load_checkpoint(dir / "nope.bin", sink, sx, sw),
                      Catch::Matchers::ContainsSubstring("cannot open checkpoint"));
  }

  SECTION("flipped byte fails the checksum") {
    std::vector<char> bytes = read_bytes(path);
    bytes[bytes.size() / 2] ^= 0x40;
    write_bytes(path, bytes.data(), bytes.size());
    CHECK_THROWS_WITH(load_checkpoint(path, sink, sx, sw),
                      Catch::Matchers::ContainsSubstring("checksum mismatch"));
    // The peek reads only the header, so a payload flip does not stop it; the
    // full load above is the integrity gate.
    CHECK(peek_checkpoint_config(path) == "{}");
  }

  SECTION("truncation is reported") {
    std::vector<char> bytes = read_bytes(path);
    write_bytes(path, bytes.data(), 10);
    CHECK_THROWS_WITH(load_checkpoint(path, sink, sx, sw),
                      Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("bad magic is reported even with a patched checksum") {
    std::vector<char> bytes = read_bytes(path);
    bytes[0] = 'X';
    const uint64_t sum = detail::fnv1a(bytes.data(), bytes.size() - 8);
    std::memcpy(bytes.data() + bytes.size() - 8, &sum, 8);
    write_bytes(path, bytes.data(), bytes.size());
    CHECK_THROWS_WITH(load_checkpoint(path, sink, sx, sw),
                      Catch::Matchers::ContainsSubstring("bad magic"));
  }

  SECTION("architecture mismatch is reported") {
    GeneratorConfig gen;
    gen.residual_blocks = 2;  // saved file has 1
    gen.base_channels = 4;
    gen.downsampling_stages = 1;
    DiscriminatorConfig disc;
    disc.layers = 2;
    disc.base_channels = 4;
    SegmenterConfig seg;
    seg.levels = 2;
    seg.initial_features = 2;
    ModelParameters other = init_parameters(gen, disc, seg, 6);
    CHECK_THROWS_WITH(load_checkpoint(path, other, sx, sw),
                      Catch::Matchers::ContainsSubstring("mismatch"));
  }

  fs::remove_all(dir);
}
