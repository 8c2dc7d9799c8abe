#include "lenslike/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <system_error>

#include "lenslike/errors.hpp"

namespace lenslike::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

void append_row(std::string& out, std::initializer_list<std::string_view> fields) {
  bool first = true;
  for (auto f : fields) {
    if (f.find_first_of(",\r\n") != std::string_view::npos)
      throw Error(ErrorCode::InvalidArgument, "field '" + std::string(f) + "' contains a separator");
    if (!first) out += ',';
    out += f;
    first = false;
  }
  out += '\n';
}

void append_comment(std::string& out, std::string_view comment) {
  std::size_t start = 0;
  while (start < comment.size()) {
    const auto nl = comment.find('\n', start);
    out += "# ";
    out += comment.substr(start, nl == std::string_view::npos ? comment.npos : nl - start);
    out += '\n';
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
}

double field_double(const Table& t, std::size_t row, std::size_t col) {
  try {
    return parse_double(t.rows[row][col]);
  } catch (const Error&) {
    t.fail(row, "column '" + t.header[col] + "' is not a number: '" + t.rows[row][col] + "'");
  }
}

int field_int(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    t.fail(row, "column '" + t.header[col] + "' is not an integer: '" + s + "'");
  return v;
}

template <typename T>
T json_get(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::Parse, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("field '") + key + "': " + e.what());
  }
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw Error(ErrorCode::Parse, source.string() + ": missing column '" + std::string(name) + "'");
}

void Table::fail(std::size_t row, const std::string& what) const {
  throw Error(ErrorCode::Parse, source.string() + ":" + std::to_string(lines.at(row)) + ": " + what);
}

Table parse_table(std::string_view text, const fs::path& source) {
  Table t;
  t.source = source;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view line =
        trim(text.substr(start, nl == std::string_view::npos ? text.npos : nl - start));
    ++line_no;
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw Error(ErrorCode::Parse, source.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(t.header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(line_no);
  }
  if (t.header.empty()) throw Error(ErrorCode::Parse, source.string() + ": no header line");
  return t;
}

Table read_table(const fs::path& path) { return parse_table(read_file(path), path); }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  s = trim(s);
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorCode::Parse, "not a number: '" + std::string(s) + "'");
  return v;
}

void atomic_write(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::Io, "cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Parse, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CosmologyGrid read_grid(const fs::path& path) {
  const Table t = read_table(path);
  const auto c_om = t.column("omega_m");
  const auto c_s8 = t.column("s8");
  const auto c_idx = t.column("index");
  std::vector<GridPoint> pts;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    (void)field_int(t, r, c_idx);
    pts.push_back({field_double(t, r, c_om), field_double(t, r, c_s8)});
  }
  if (pts.empty()) throw Error(ErrorCode::Parse, path.string() + ": grid file has no rows");
  return CosmologyGrid(std::move(pts));
}

std::string format_grid(const CosmologyGrid& grid) {
  std::string out;
  append_comment(out, std::string(kSchema) + " grid");
  append_row(out, {"index", "omega_m", "s8"});
  for (int g = 0; g < grid.size(); ++g)
    append_row(out, {std::to_string(g), format_double(grid[g].omega_m), format_double(grid[g].s8)});
  return out;
}

std::vector<RawRecord> read_predictions(const fs::path& path) {
  const Table t = read_table(path);
  const auto c_m = t.column("member_id");
  const auto c_id = t.column("map_id");
  const auto c_tom = t.column("omega_m_true");
  const auto c_ts8 = t.column("s8_true");
  const auto c_pom = t.column("pred_omega_m");
  const auto c_ps8 = t.column("pred_s8");
  std::vector<RawRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    RawRecord rec;
    rec.member_id = field_int(t, r, c_m);
    rec.map_id = t.rows[r][c_id];
    if (rec.map_id.empty()) t.fail(r, "empty map_id");
    const bool has_om = !t.rows[r][c_tom].empty();
    const bool has_s8 = !t.rows[r][c_ts8].empty();
    if (has_om != has_s8) t.fail(r, "truth label is half empty");
    if (has_om) rec.truth = Vec2(field_double(t, r, c_tom), field_double(t, r, c_ts8));
    rec.pred = Vec2(field_double(t, r, c_pom), field_double(t, r, c_ps8));
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw Error(ErrorCode::Parse, path.string() + ": no prediction rows");
  return out;
}

std::string format_predictions(std::span<const RawRecord> records, std::string_view comment) {
  std::string out;
  append_comment(out, std::string(kSchema) + " predictions");
  if (!comment.empty()) append_comment(out, comment);
  append_row(out, {"member_id", "map_id", "omega_m_true", "s8_true", "pred_omega_m", "pred_s8"});
  for (const auto& r : records) {
    const std::string om = r.truth ? format_double((*r.truth)(0)) : "";
    const std::string s8 = r.truth ? format_double((*r.truth)(1)) : "";
    append_row(out, {std::to_string(r.member_id), r.map_id, om, s8, format_double(r.pred(0)),
                     format_double(r.pred(1))});
  }
  return out;
}

std::vector<Truth> read_truths(const fs::path& path) {
  const Table t = read_table(path);
  const auto c_id = t.column("map_id");
  const auto c_om = t.column("omega_m_true");
  const auto c_s8 = t.column("s8_true");
  std::vector<Truth> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    out.push_back({t.rows[r][c_id], Vec2(field_double(t, r, c_om), field_double(t, r, c_s8))});
  if (out.empty()) throw Error(ErrorCode::Parse, path.string() + ": no truth rows");
  return out;
}

std::string format_truths(std::span<const Truth> truths, std::string_view comment) {
  std::string out;
  append_comment(out, std::string(kSchema) + " truth");
  if (!comment.empty()) append_comment(out, comment);
  append_row(out, {"map_id", "omega_m_true", "s8_true"});
  for (const auto& t : truths)
    append_row(out, {t.map_id, format_double(t.theta(0)), format_double(t.theta(1))});
  return out;
}

std::string format_results(const BatchResult& batch) {
  std::string out;
  append_comment(out, std::string(kSchema) + " posterior results");
  append_row(out, {"map_id", "omega_m_post", "s8_post", "sigma_omega_m", "sigma_s8", "top_index",
                   "entropy", "status"});
  for (const auto& r : batch.results) {
    const bool ok = r.status == PosteriorStatus::Ok;
    append_row(out, {r.map_id, format_double(r.mean(0)), format_double(r.mean(1)),
                     format_double(r.sigma(0)), format_double(r.sigma(1)),
                     std::to_string(r.top_index), format_double(ok ? r.entropy : std::nan("")),
                     ok ? "ok" : "underflow"});
  }
  return out;
}

std::string format_ensemble(const BatchResult& batch) {
  std::string out;
  append_comment(out, std::string(kSchema) + " ensemble weights");
  append_row(out, {"member_id", "nll", "weight"});
  for (std::size_t m = 0; m < batch.member_ids.size(); ++m)
    append_row(out, {std::to_string(batch.member_ids[m]), format_double(batch.member_nll[m]),
                     format_double(batch.ensemble_weights[m])});
  return out;
}

std::vector<PosteriorResult> read_results(const fs::path& path) {
  const Table t = read_table(path);
  const auto c_id = t.column("map_id");
  const auto c_om = t.column("omega_m_post");
  const auto c_s8 = t.column("s8_post");
  const auto c_som = t.column("sigma_omega_m");
  const auto c_ss8 = t.column("sigma_s8");
  const auto c_top = t.column("top_index");
  const auto c_ent = t.column("entropy");
  const auto c_st = t.column("status");
  std::vector<PosteriorResult> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PosteriorResult res;
    res.map_id = t.rows[r][c_id];
    res.mean = Vec2(field_double(t, r, c_om), field_double(t, r, c_s8));
    res.sigma = Vec2(field_double(t, r, c_som), field_double(t, r, c_ss8));
    res.top_index = field_int(t, r, c_top);
    res.entropy = field_double(t, r, c_ent);
    const std::string& st = t.rows[r][c_st];
    if (st == "ok") res.status = PosteriorStatus::Ok;
    else if (st == "underflow") res.status = PosteriorStatus::Underflow;
    else t.fail(r, "unknown status '" + st + "'");
    out.push_back(std::move(res));
  }
  if (out.empty()) throw Error(ErrorCode::Parse, path.string() + ": no result rows");
  return out;
}

json config_to_json(const CalibrationConfig& cfg) {
  return json{{"sigma_bw", cfg.sigma_bw},
              {"lambda_lw", cfg.lambda_lw},
              {"p_dof", cfg.p_dof},
              {"hartlap", cfg.hartlap_enabled},
              {"cov_jitter", cfg.cov_jitter}};
}

CalibrationConfig config_from_json(const json& j, CalibrationConfig base) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "calibration config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "sigma_bw" && key != "lambda_lw" && key != "p_dof" && key != "hartlap" &&
        key != "cov_jitter" && key != "schema")
      throw Error(ErrorCode::Parse, "unknown calibration config key '" + key + "'");
  }
  if (j.contains("sigma_bw")) base.sigma_bw = json_get<double>(j, "sigma_bw");
  if (j.contains("lambda_lw")) base.lambda_lw = json_get<double>(j, "lambda_lw");
  if (j.contains("p_dof")) base.p_dof = json_get<double>(j, "p_dof");
  if (j.contains("hartlap")) base.hartlap_enabled = json_get<bool>(j, "hartlap");
  if (j.contains("cov_jitter")) base.cov_jitter = json_get<double>(j, "cov_jitter");
  return base;
}

CalibrationConfig read_config(const fs::path& path, CalibrationConfig base) {
  return config_from_json(parse_json_file(path), base);
}

std::vector<CalibrationConfig> read_search_space(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_object()) throw Error(ErrorCode::Parse, path.string() + ": expected a JSON object");
  if (j.contains("candidates")) {
    std::vector<CalibrationConfig> out;
    for (const auto& c : j.at("candidates")) out.push_back(config_from_json(c));
    return out;
  }
  SearchSpace space;
  space.sigma_bw = json_get<std::vector<double>>(j, "sigma_bw");
  space.lambda_lw = json_get<std::vector<double>>(j, "lambda_lw");
  space.p_dof = json_get<std::vector<double>>(j, "p_dof");
  if (j.contains("hartlap")) space.hartlap_enabled = json_get<bool>(j, "hartlap");
  if (j.contains("cov_jitter")) space.cov_jitter = json_get<double>(j, "cov_jitter");
  return space.candidates();
}

json model_to_json(const CalibratedLikelihood& model) {
  json grid = json::array();
  for (const auto& p : model.grid->points()) grid.push_back({p.omega_m, p.s8});
  json moments = json::array();
  for (const auto& m : model.moments)
    moments.push_back({{"index", m.grid_index},
                       {"n_samples", m.n_samples},
                       {"mean", {m.mean(0), m.mean(1)}},
                       {"cov", {{m.cov(0, 0), m.cov(0, 1)}, {m.cov(1, 0), m.cov(1, 1)}}}});
  return json{{"schema", kSchema},
              {"kind", "calibrated_likelihood"},
              {"grid", grid},
              {"config", config_to_json(model.config)},
              {"tau", model.tau},
              {"med5", model.med5},
              {"bandwidth", model.bandwidth},
              {"moments", moments},
              {"provenance", model.provenance},
              {"warnings", model.warnings}};
}

CalibratedLikelihood model_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != kSchema)
    throw Error(ErrorCode::Parse, std::string("model file is not a ") + kSchema + " document");
  if (j.value("kind", "") != "calibrated_likelihood")
    throw Error(ErrorCode::Parse, "model file kind is not calibrated_likelihood");
  CalibratedLikelihood model;
  std::vector<GridPoint> pts;
  for (const auto& p : json_get<std::vector<std::array<double, 2>>>(j, "grid"))
    pts.push_back({p[0], p[1]});
  model.grid = std::make_shared<const CosmologyGrid>(std::move(pts));
  model.config = config_from_json(j.at("config"));
  model.tau = json_get<double>(j, "tau");
  model.med5 = json_get<double>(j, "med5");
  model.bandwidth = json_get<double>(j, "bandwidth");
  for (const auto& m : j.at("moments")) {
    MomentEntry e;
    e.grid_index = json_get<int>(m, "index");
    e.n_samples = json_get<long>(m, "n_samples");
    const auto mean = json_get<std::array<double, 2>>(m, "mean");
    const auto cov = json_get<std::array<std::array<double, 2>, 2>>(m, "cov");
    e.mean = Vec2(mean[0], mean[1]);
    e.cov << cov[0][0], cov[0][1], cov[1][0], cov[1][1];
    model.moments.push_back(e);
  }
  model.provenance = json_get<std::map<std::string, std::string>>(j, "provenance");
  model.warnings = json_get<std::vector<std::string>>(j, "warnings");
  model.validate();
  return model;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void write_model(const fs::path& path, const CalibratedLikelihood& model) {
  atomic_write(path, dump_json(model_to_json(model)));
}

CalibratedLikelihood read_model(const fs::path& path) {
  return model_from_json(parse_json_file(path));
}

json report_to_json(const ScoreReport& report) {
  json rows = json::array();
  for (const auto& c : report.per_cosmology)
    rows.push_back({{"grid_index", c.grid_index},
                    {"omega_m", c.theta(0)},
                    {"s8", c.theta(1)},
                    {"mean_score", c.mean_score},
                    {"standard_error", c.standard_error},
                    {"n_maps", c.n_maps}});
  return json{{"schema", kSchema},
              {"kind", "score_report"},
              {"mean_score", report.mean_score},
              {"mse", report.mse},
              {"mse_normalisation", "grid_extent"},
              {"coverage", report.coverage},
              {"lambda", report.lambda},
              {"sigma_floor", kSigmaFloor},
              {"n_maps", report.n_maps},
              {"n_flagged", report.n_flagged},
              {"per_cosmology", rows}};
}

std::string format_per_cosmology(const ScoreReport& report) {
  std::string out;
  append_comment(out, std::string(kSchema) + " per-cosmology scores");
  append_row(out, {"grid_index", "omega_m", "s8", "mean_score", "standard_error", "n_maps"});
  for (const auto& c : report.per_cosmology)
    append_row(out, {std::to_string(c.grid_index), format_double(c.theta(0)),
                     format_double(c.theta(1)), format_double(c.mean_score),
                     format_double(c.standard_error), std::to_string(c.n_maps)});
  return out;
}

std::string format_candidates(std::span<const CandidateResult> table) {
  std::string out;
  append_comment(out, std::string(kSchema) + " tuning candidates, best first");
  append_row(out, {"rank", "position", "sigma_bw", "lambda_lw", "p_dof", "hartlap", "cov_jitter",
                   "score", "fold_a", "fold_b", "error"});
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& c = table[i];
    std::string err = c.error;
    for (auto& ch : err)
      if (ch == ',' || ch == '\n') ch = ';';
    append_row(out, {std::to_string(i), std::to_string(c.position), format_double(c.config.sigma_bw),
                     format_double(c.config.lambda_lw), format_double(c.config.p_dof),
                     c.config.hartlap_enabled ? "1" : "0", format_double(c.config.cov_jitter),
                     format_double(c.score), format_double(c.fold_scores[0]),
                     format_double(c.fold_scores[1]), err});
  }
  return out;
}

// ---------------------------------------------------------------------------
// .npy

namespace {

struct NpyArray {
  std::string descr;
  std::vector<std::size_t> shape;
  std::string payload;
};

std::string header_value(const std::string& header, const std::string& key) {
  const auto k = header.find("'" + key + "'");
  if (k == std::string::npos) throw Error(ErrorCode::Parse, "npy header lacks '" + key + "'");
  auto v = header.find(':', k);
  if (v == std::string::npos) throw Error(ErrorCode::Parse, "malformed npy header");
  ++v;
  while (v < header.size() && header[v] == ' ') ++v;
  if (header[v] == '\'') {
    const auto end = header.find('\'', v + 1);
    return header.substr(v + 1, end - v - 1);
  }
  if (header[v] == '(') {
    const auto end = header.find(')', v);
    return header.substr(v + 1, end - v - 1);
  }
  const auto end = header.find_first_of(",}", v);
  return std::string(trim(header.substr(v, end - v)));
}

NpyArray read_npy(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
    throw Error(ErrorCode::Parse, path.string() + ": not an .npy file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    offset = 10;
  } else {
    if (bytes.size() < 12) throw Error(ErrorCode::Parse, path.string() + ": truncated header");
    for (int b = 0; b < 4; ++b)
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
    offset = 12;
  }
  if (bytes.size() < offset + header_len)
    throw Error(ErrorCode::Parse, path.string() + ": truncated header");
  const std::string header = bytes.substr(offset, header_len);
  NpyArray arr;
  arr.descr = header_value(header, "descr");
  if (header_value(header, "fortran_order") != "False")
    throw Error(ErrorCode::Parse, path.string() + ": Fortran-ordered arrays are not supported");
  std::stringstream shape(header_value(header, "shape"));
  std::string dim;
  while (std::getline(shape, dim, ',')) {
    const auto d = trim(dim);
    if (!d.empty()) arr.shape.push_back(static_cast<std::size_t>(std::stoull(std::string(d))));
  }
  arr.payload = bytes.substr(offset + header_len);
  return arr;
}

template <typename T>
std::vector<double> decode(const std::string& payload, std::size_t n) {
  if (payload.size() < n * sizeof(T)) throw Error(ErrorCode::Parse, "npy payload is truncated");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, payload.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<double>(v);
  }
  return out;
}

std::vector<double> decode_any(const NpyArray& arr, std::size_t n, const fs::path& path) {
  const std::string& d = arr.descr;
  if (d == "<f8") return decode<double>(arr.payload, n);
  if (d == "<f4") return decode<float>(arr.payload, n);
  if (d == "<i8") return decode<std::int64_t>(arr.payload, n);
  if (d == "<i4") return decode<std::int32_t>(arr.payload, n);
  if (d == "|u1" || d == "|b1") return decode<std::uint8_t>(arr.payload, n);
  throw Error(ErrorCode::Parse, path.string() + ": unsupported dtype '" + d + "'");
}

std::string npy_bytes(const std::string& descr, std::size_t h, std::size_t w,
                      const void* data, std::size_t nbytes) {
  std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (" +
                       std::to_string(h) + ", " + std::to_string(w) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::string out = "\x93NUMPY";
  out += '\x01';
  out += '\x00';
  out += static_cast<char>(header.size() & 0xff);
  out += static_cast<char>((header.size() >> 8) & 0xff);
  out += header;
  out.append(static_cast<const char*>(data), nbytes);
  return out;
}

}  // namespace

Map2D read_npy_map(const fs::path& path) {
  const NpyArray arr = read_npy(path);
  if (arr.shape.size() != 2) throw Error(ErrorCode::Parse, path.string() + ": expected a 2-D array");
  const std::size_t n = arr.shape[0] * arr.shape[1];
  return Map2D(arr.shape[0], arr.shape[1], decode_any(arr, n, path));
}

std::vector<std::uint8_t> read_npy_mask(const fs::path& path, std::size_t height, std::size_t width) {
  const NpyArray arr = read_npy(path);
  if (arr.shape.size() != 2 || arr.shape[0] != height || arr.shape[1] != width)
    throw Error(ErrorCode::ShapeMismatch, path.string() + ": mask shape differs from the map");
  const auto values = decode_any(arr, height * width, path);
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] != 0.0 ? 1 : 0;
  return out;
}

std::string format_npy(const Map2D& map) {
  return npy_bytes("<f8", map.height, map.width, map.data.data(), map.data.size() * sizeof(double));
}

std::string format_npy_mask(const Map2D& map) {
  if (!map.mask) throw Error(ErrorCode::InvalidArgument, "map has no mask");
  return npy_bytes("|u1", map.height, map.width, map.mask->data(), map.mask->size());
}

}  // namespace lenslike::io
