#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <fstream>

#include "dgct/io.hpp"
#include "test_support.hpp"

using namespace dgct;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dgct_io_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ProjectionSet tiny_data() {
  ConeBeamGeometry g;
  g.nu = 12;
  g.nv = 11;
  g.dso = 1.7;
  g.bounds.lo = Vec3(-0.5, -0.45, -0.4);
  return generate_dataset(default_phantom(3.0), g, 5, 10.0, 2);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.iters_total = 16;
  c.iters_warmup = 8;
  c.kernels = 30;
  c.init_grid_res = 12;
  c.planes.levels = 2;
  c.planes.base_res = 4;
  c.planes.time_res = 5;
  c.planes.features = 3;
  c.decoder_width = 6;
  c.tv_res = 6;
  c.densify.start = 3;
  c.densify.interval = 3;
  c.seed = 3;
  return c;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("dataset round-trip") {
    TempDir tmp;
    const auto data = tiny_data();
    const fs::path dir = tmp.path / "data";
    write_dataset(dir, data);
    CHECK(fs::exists(dir / "geometry.txt"));
    CHECK(fs::exists(dir / "meta.csv"));
    CHECK(fs::file_size(dir / "proj_0004.raw") == 12 * 11 * 4);
    const std::string meta = read_text_file(dir / "meta.csv");
    CHECK(meta.rfind("index,timestamp,angle\n", 0) == 0);
    const std::string geo = read_text_file(dir / "geometry.txt");
    CHECK(geo.find("t_true_period=3") != std::string::npos);
    CHECK(geo.find("bounds_min=-0.5,-0.45,-0.4") != std::string::npos);

    const ProjectionSet back = read_dataset(dir);
    REQUIRE(back.size() == data.size());
    CHECK(back.geometry.nu == 12);
    CHECK(back.geometry.nv == 11);
    CHECK(back.geometry.dso == 1.7);
    CHECK(back.geometry.dsd == data.geometry.dsd);
    CHECK(back.geometry.bounds.lo == data.geometry.bounds.lo);
    CHECK(back.true_period.value() == 3.0);
    CHECK(back.duration == 10.0);
    for (std::size_t j = 0; j < data.size(); ++j) {
      CHECK(back.items[j].timestamp == data.items[j].timestamp);
      CHECK(back.items[j].angle == data.items[j].angle);
      for (std::size_t p = 0; p < data.items[j].image.size(); ++p) {
        CHECK(back.items[j].image.data[p] == double(float(data.items[j].image.data[p])));
      }
    }
  }

  TEST_CASE("raw images are little-endian float32, row-major") {
    TempDir tmp;
    Image img(3, 2);
    img.data = {0.0, 1.0, -2.5, 0.125, 3.0, 1e-3};
    write_image_raw(tmp.path / "a.raw", img);
    const auto bytes = read_bytes(tmp.path / "a.raw");
    REQUIRE(bytes.size() == 24);
    // 1.0f = 0x3f800000
    CHECK(bytes[4] == 0x00);
    CHECK(bytes[7] == 0x3f);
    CHECK(bytes[6] == 0x80);
    const Image back = read_image_raw(tmp.path / "a.raw", 3, 2);
    CHECK(back.at(1, 0) == 1.0);
    CHECK(back.at(0, 1) == 0.125);
    CHECK_THROWS_AS(read_image_raw(tmp.path / "a.raw", 4, 2), FormatError);
  }

  TEST_CASE("volume round-trip") {
    TempDir tmp;
    VolumeSpec spec;
    spec.res = {3, 4, 5};
    Volume v(spec);
    testing::SplitMix64 rng(81);
    for (double& x : v.data) x = rng.uniform();
    write_volume(tmp.path / "v.bin", v);
    const auto bytes = read_bytes(tmp.path / "v.bin");
    REQUIRE(bytes.size() == 16 + 60 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DTVL");
    CHECK(bytes[4] == 3);
    CHECK(bytes[8] == 4);
    CHECK(bytes[12] == 5);
    const Volume back = read_volume(tmp.path / "v.bin");
    CHECK(back.spec.res == spec.res);
    for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(back.data[i] == double(float(v.data[i])));

    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(tmp.path / "bad.bin", bad);
    CHECK_THROWS_AS(read_volume(tmp.path / "bad.bin"), FormatError);
    bad = bytes;
    bad.resize(bad.size() - 4);
    write_bytes(tmp.path / "short.bin", bad);
    CHECK_THROWS_AS(read_volume(tmp.path / "short.bin"), FormatError);
  }

  TEST_CASE("checkpoint round-trip is exact") {
    const auto data = tiny_data();
    const TrainConfig cfg = tiny_config();
    TrainState s = init_state(data, cfg);
    for (int i = 0; i < 11; ++i) train_step(s, data, cfg);

    const auto bytes = encode_checkpoint(s, cfg);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DTCK");
    const Checkpoint ck = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(ck.state, ck.config) == bytes);
    CHECK(format_train_config(ck.config) == format_train_config(cfg));
    CHECK(ck.state.iteration == 11);
    CHECK(ck.state.model.period.tau == s.model.period.tau);
    CHECK(ck.state.model.field.bounds.time.end == s.model.field.bounds.time.end);
    CHECK(ck.state.moments.field_steps == s.moments.field_steps);

    // Continuing from the decoded state matches continuing in memory.
    TrainState copy = ck.state;
    for (int i = 0; i < 5; ++i) {
      const auto a = train_step(s, data, cfg);
      const auto b = train_step(copy, data, cfg);
      CHECK(a.terms.total == b.terms.total);
    }
    CHECK(encode_checkpoint(copy, cfg) == encode_checkpoint(s, cfg));
  }

  TEST_CASE("malformed checkpoints are rejected") {
    const auto data = tiny_data();
    const TrainConfig cfg = tiny_config();
    const TrainState s = init_state(data, cfg);
    const auto bytes = encode_checkpoint(s, cfg);

    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad.resize(bytes.size() / 2);
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    CHECK_THROWS_AS(decode_checkpoint({}), FormatError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dgct.ckpt"), FormatError);

    TempDir tmp;
    save_checkpoint(tmp.path / "c.bin", s, cfg);
    CHECK(read_bytes(tmp.path / "c.bin") == bytes);
    CHECK(encode_checkpoint(load_checkpoint(tmp.path / "c.bin").state, cfg) == bytes);
  }

  TEST_CASE("simulation config") {
    SimulationConfig c;
    c.period = 2.5;
    c.n_proj = 33;
    c.seed = 9;
    c.geometry.nu = 20;
    c.geometry.bounds.hi = Vec3(0.5, 0.25, 0.5);
    const SimulationConfig back = parse_simulation_config(format_simulation_config(c));
    CHECK(format_simulation_config(back) == format_simulation_config(c));
    CHECK(back.period == 2.5);
    CHECK(back.geometry.bounds.hi == c.geometry.bounds.hi);
    CHECK(back.phantom().period == 2.5);

    CHECK_THROWS_AS(parse_simulation_config("wobble=3\n"), FormatError);
    CHECK_THROWS_AS(parse_simulation_config("period=abc\n"), FormatError);
    CHECK_THROWS_AS(parse_simulation_config("bounds_min=1,2\n"), FormatError);
    CHECK_THROWS_AS(parse_simulation_config("period=1\nperiod=2\n"), FormatError);
    SimulationConfig neg;
    neg.period = -1.0;
    CHECK_THROWS_AS(neg.validate(), InputDomainError);
  }

  TEST_CASE("malformed datasets are rejected") {
    TempDir tmp;
    CHECK_THROWS_AS(read_dataset(tmp.path / "missing"), FormatError);
    const fs::path dir = tmp.path / "d";
    write_dataset(dir, tiny_data());
    const std::string meta = read_text_file(dir / "meta.csv");

    write_text_file(dir / "meta.csv", "idx,time,angle\n");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    write_text_file(dir / "meta.csv", "index,timestamp,angle\n0,1.0\n");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    write_text_file(dir / "meta.csv", meta);
    CHECK_NOTHROW(read_dataset(dir));

    fs::resize_file(dir / "proj_0002.raw", 10);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    write_dataset(dir, tiny_data());
    write_text_file(dir / "geometry.txt", read_text_file(dir / "geometry.txt") + "colour=red\n");
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
  }

  TEST_CASE("csv writers") {
    MetricsRow r;
    r.iter = 3;
    r.terms.render = 0.5;
    r.terms.total = 0.75;
    r.period = 2.8;
    r.lr_position = 2e-4;
    const std::string csv = metrics_csv({r});
    CHECK(csv == "iter,l_render,l_pc,l_tv3d,l_tv4d,total,T_hat,lr_pos\n3,0.5,0,0,0,0.75,2.8,2e-04\n");
    CHECK(curve_csv({{0.5, 1.25}}) == "t,volume\n0.5,1.25\n");
  }
}
