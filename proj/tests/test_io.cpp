#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"
#include "lenslike/io.hpp"

using namespace lenslike;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("lenslike_io_" + std::to_string(std::random_device{}()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

// A minimal .npy file assembled byte by byte.
std::string npy(const std::string& descr, const std::string& shape, const std::string& payload,
                int major = 1, bool fortran = false) {
  std::string header = "{'descr': '" + descr + "', 'fortran_order': " + (fortran ? "True" : "False") +
                       ", 'shape': (" + shape + "), }";
  const std::size_t pre = major == 1 ? 10 : 12;
  while ((pre + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::string out = "\x93NUMPY";
  out += static_cast<char>(major);
  out += '\0';
  const std::size_t n = header.size();
  out += static_cast<char>(n & 0xff);
  out += static_cast<char>((n >> 8) & 0xff);
  if (major != 1) out += std::string(2, '\0');
  return out + header + payload;
}

template <typename T>
std::string raw(std::initializer_list<T> v) {
  std::string s(v.size() * sizeof(T), '\0');
  std::memcpy(s.data(), std::data(v), s.size());
  return s;
}

}  // namespace

TEST_CASE("doubles round-trip through text") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, (i % 40) - 20);
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(NAN) == "nan");
  CHECK(io::format_double(-INFINITY) == "-inf");
  CHECK(std::isnan(io::parse_double("nan")));
  CHECK_THROWS_AS(io::parse_double("0.3x"), Error);
  CHECK_THROWS_AS(io::parse_double(""), Error);
}

TEST_CASE("table parsing") {
  const auto t = io::parse_table("# comment\n\nmap_id,x\n a ,1\n\nb,2\n", "t.csv");
  CHECK(t.header == std::vector<std::string>{"map_id", "x"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "a");
  CHECK(t.lines[1] == 6);
  try {
    io::parse_table("a,b\n1,2\n3\n", "bad.csv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
  }
  CHECK(code_of([] { io::parse_table("# only a comment\n"); }) == ErrorCode::Parse);
}

TEST_CASE("grid and prediction files") {
  TempDir dir;
  write(dir / "grid.csv", "index,omega_m,s8\n0,0.3,0.8\n1,0.1,0.9\n");
  const auto grid = io::read_grid(dir / "grid.csv");
  CHECK(grid.size() == 2);
  CHECK(grid[0].omega_m == 0.1);
  const auto again = io::parse_table(io::format_grid(grid));
  CHECK(again.rows.size() == 2);

  std::vector<RawRecord> recs{{0, "a", Vec2(0.1, 0.9), Vec2(0.12345678901234567, 0.9)},
                              {1, "b", std::nullopt, Vec2(-1e-300, 3.0)}};
  io::atomic_write(dir / "pred.csv", io::format_predictions(recs, "seed=1"));
  CHECK_FALSE(fs::exists(dir / "pred.csv.tmp"));
  const auto back = io::read_predictions(dir / "pred.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].member_id == 0);
  CHECK(back[0].pred == recs[0].pred);
  CHECK(*back[0].truth == *recs[0].truth);
  CHECK_FALSE(back[1].truth.has_value());
  CHECK(back[1].pred == recs[1].pred);

  write(dir / "half.csv",
        "member_id,map_id,omega_m_true,s8_true,pred_omega_m,pred_s8\n0,a,0.1,,0.1,0.9\n");
  CHECK(code_of([&] { io::read_predictions(dir / "half.csv"); }) == ErrorCode::Parse);
  write(dir / "empty.csv", "member_id,map_id,omega_m_true,s8_true,pred_omega_m,pred_s8\n");
  CHECK(code_of([&] { io::read_predictions(dir / "empty.csv"); }) == ErrorCode::Parse);
  write(dir / "nocol.csv", "member_id,map_id,pred_omega_m\n0,a,1\n");
  CHECK(code_of([&] { io::read_predictions(dir / "nocol.csv"); }) == ErrorCode::Parse);
  CHECK(code_of([&] { io::read_predictions(dir / "missing.csv"); }) == ErrorCode::Parse);

  const std::vector<RawRecord> bad_id{{0, "x,y", std::nullopt, Vec2(0.1, 0.9)}};
  CHECK(code_of([&] { io::format_predictions(bad_id, ""); }) == ErrorCode::InvalidArgument);
  const std::vector<RawRecord> newline_id{{0, "x\ny", std::nullopt, Vec2(0.1, 0.9)}};
  CHECK(code_of([&] { io::format_predictions(newline_id, ""); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("truth and result files") {
  TempDir dir;
  const std::vector<Truth> truths{{"m1", Vec2(0.3, 0.8)}, {"m2", Vec2(0.1 + 0.2, 0.7)}};
  io::atomic_write(dir / "truth.csv", io::format_truths(truths));
  const auto t = io::read_truths(dir / "truth.csv");
  REQUIRE(t.size() == 2);
  CHECK(t[1].theta == truths[1].theta);

  BatchResult b;
  PosteriorResult ok;
  ok.map_id = "m1";
  ok.mean = Vec2(0.3, 0.81);
  ok.sigma = Vec2(0.01, 1.0 / 3.0);
  ok.top_index = 4;
  ok.entropy = 0.25;
  PosteriorResult bad;
  bad.map_id = "m2";
  bad.mean = Vec2(NAN, NAN);
  bad.sigma = Vec2(NAN, NAN);
  bad.status = PosteriorStatus::Underflow;
  b.results = {ok, bad};
  io::atomic_write(dir / "res.csv", io::format_results(b));
  const auto r = io::read_results(dir / "res.csv");
  REQUIRE(r.size() == 2);
  CHECK(r[0].mean == ok.mean);
  CHECK(r[0].sigma == ok.sigma);
  CHECK(r[0].top_index == 4);
  CHECK(r[1].status == PosteriorStatus::Underflow);
  CHECK(std::isnan(r[1].entropy));
}

TEST_CASE("model files round-trip exactly") {
  std::vector<GridPoint> pts{{0.1, 0.7}, {0.2, 0.8}, {0.3, 0.75}};
  CalibratedLikelihood m;
  m.grid = std::make_shared<const CosmologyGrid>(pts);
  for (int g = 0; g < 3; ++g) {
    MomentEntry e;
    e.grid_index = g;
    e.mean = m.grid->theta(g) + Vec2(1.0 / 3.0, -1e-7 * g);
    e.cov << 0.01 + g * 1e-5, 1.0 / 7000.0, 1.0 / 7000.0, 0.02;
    e.n_samples = 100 + g;
    m.moments.push_back(e);
  }
  m.tau = 1.0 / 0.93;
  m.config.sigma_bw = 0.7;
  m.med5 = 0.123;
  m.bandwidth = 0.7 * 0.123;
  m.provenance["seed"] = "5";
  m.warnings.push_back("something odd");
  TempDir dir;
  io::write_model(dir / "model.json", m);
  const auto back = io::read_model(dir / "model.json");
  CHECK(back.tau == m.tau);
  CHECK(back.config == m.config);
  CHECK(back.med5 == m.med5);
  CHECK(back.provenance == m.provenance);
  CHECK(back.warnings == m.warnings);
  REQUIRE(back.moments.size() == 3);
  for (int g = 0; g < 3; ++g) {
    CHECK(back.moments[g].mean == m.moments[g].mean);
    CHECK(back.moments[g].cov == m.moments[g].cov);
    CHECK(back.moments[g].n_samples == m.moments[g].n_samples);
    CHECK(back.grid->theta(g) == m.grid->theta(g));
  }
  auto j = io::model_to_json(m);
  CHECK(j["schema"] == "lenslike/1");
  j["schema"] = "other/2";
  CHECK(code_of([&] { io::model_from_json(j); }) == ErrorCode::Parse);
  j = io::model_to_json(m);
  j["moments"][1]["cov"] = {{1.0, 2.0}, {2.0, 1.0}};
  CHECK(code_of([&] { io::model_from_json(j); }) == ErrorCode::NotPositiveDefinite);
}

TEST_CASE("config and search space files") {
  TempDir dir;
  write(dir / "cfg.json", R"({"sigma_bw": 0.5, "hartlap": false})");
  const auto c = io::read_config(dir / "cfg.json");
  CHECK(c.sigma_bw == 0.5);
  CHECK_FALSE(c.hartlap_enabled);
  CHECK(c.lambda_lw == CalibrationConfig{}.lambda_lw);
  write(dir / "typo.json", R"({"sigma_bandwidth": 0.5})");
  CHECK(code_of([&] { io::read_config(dir / "typo.json"); }) == ErrorCode::Parse);
  write(dir / "broken.json", R"({"sigma_bw": )");
  CHECK(code_of([&] { io::read_config(dir / "broken.json"); }) == ErrorCode::Parse);

  write(dir / "space.json", R"({"sigma_bw": [0.5, 1], "lambda_lw": [0, 0.1], "p_dof": [2]})");
  const auto s = io::read_search_space(dir / "space.json");
  REQUIRE(s.size() == 4);
  CHECK(s[1].lambda_lw == 0.1);
  write(dir / "list.json", R"({"candidates": [{"sigma_bw": 2}, {"p_dof": 3}]})");
  const auto l = io::read_search_space(dir / "list.json");
  REQUIRE(l.size() == 2);
  CHECK(l[0].sigma_bw == 2);
  CHECK(l[1].p_dof == 3);
}

TEST_CASE("candidate table escapes error text") {
  CandidateResult r;
  r.position = 0;
  r.score = -INFINITY;
  r.error = "bad, very\nbad";
  const std::vector<CandidateResult> rows{r};
  const auto t = io::parse_table(io::format_candidates(rows));
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].back() == "bad; very;bad");
}

TEST_CASE("npy arrays") {
  TempDir dir;
  write(dir / "f8.npy", npy("<f8", "2, 3", raw<double>({1, 2, 3, 4, 5, 6.5})));
  const auto m = io::read_npy_map(dir / "f8.npy");
  CHECK(m.height == 2);
  CHECK(m.width == 3);
  CHECK(m(1, 2) == 6.5);

  write(dir / "f4.npy", npy("<f4", "1, 2", raw<float>({0.5f, -2.0f}), 2));
  const auto f = io::read_npy_map(dir / "f4.npy");
  CHECK(f.data == std::vector<double>{0.5, -2.0});

  write(dir / "mask.npy", npy("|b1", "2, 3", raw<std::uint8_t>({1, 0, 1, 1, 1, 0})));
  CHECK(io::read_npy_mask(dir / "mask.npy", 2, 3) == std::vector<std::uint8_t>{1, 0, 1, 1, 1, 0});
  CHECK(code_of([&] { io::read_npy_mask(dir / "mask.npy", 3, 2); }) == ErrorCode::ShapeMismatch);

  write(dir / "fort.npy", npy("<f8", "1, 1", raw<double>({1}), 1, true));
  CHECK(code_of([&] { io::read_npy_map(dir / "fort.npy"); }) == ErrorCode::Parse);
  write(dir / "c16.npy", npy("<c16", "1, 1", std::string(16, '\0')));
  CHECK(code_of([&] { io::read_npy_map(dir / "c16.npy"); }) == ErrorCode::Parse);
  write(dir / "trunc.npy", npy("<f8", "2, 2", raw<double>({1, 2})));
  CHECK(code_of([&] { io::read_npy_map(dir / "trunc.npy"); }) == ErrorCode::Parse);
  write(dir / "notnpy.npy", "hello world, definitely not numpy");
  CHECK(code_of([&] { io::read_npy_map(dir / "notnpy.npy"); }) == ErrorCode::Parse);

  Map2D w(3, 2, {1.0 / 3, 2, 3, 4, 5, -0.0}, std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1});
  const auto bytes = io::format_npy(w);
  CHECK(bytes.compare(0, 6, "\x93NUMPY") == 0);
  CHECK((10 + (static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8)) % 64 == 0);
  io::atomic_write(dir / "w.npy", bytes);
  io::atomic_write(dir / "w_mask.npy", io::format_npy_mask(w));
  auto back = io::read_npy_map(dir / "w.npy");
  back.mask = io::read_npy_mask(dir / "w_mask.npy", 3, 2);
  CHECK(back == w);
}
