#include "lenslike/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "lenslike/calibrate.hpp"
#include "lenslike/errors.hpp"
#include "lenslike/io.hpp"
#include "lenslike/parallel.hpp"
#include "lenslike/pca.hpp"
#include "lenslike/posterior.hpp"
#include "lenslike/rng.hpp"
#include "lenslike/scattering.hpp"
#include "lenslike/scoring.hpp"
#include "lenslike/simulate.hpp"

namespace lenslike {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  double lambda = kDefaultLambda;
  std::string config;
  unsigned threads = 0;
};

struct CalibrationOverrides {
  std::optional<double> sigma_bw;
  std::optional<double> lambda_lw;
  std::optional<double> p_dof;
  bool no_hartlap = false;
};

// Error codes that describe a failed calibration rather than unusable input.
bool is_calibration_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::LabelNotOnGrid:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::DegenerateCorrection:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::EmptySearchSpace:
      return true;
    default:
      return false;
  }
}

CalibrationConfig resolve_config(const Globals& g, const CalibrationOverrides& o) {
  CalibrationConfig cfg;
  if (!g.config.empty()) cfg = io::read_config(g.config);
  if (o.sigma_bw) cfg.sigma_bw = *o.sigma_bw;
  if (o.lambda_lw) cfg.lambda_lw = *o.lambda_lw;
  if (o.p_dof) cfg.p_dof = *o.p_dof;
  if (o.no_hartlap) cfg.hartlap_enabled = false;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, std::string("invalid calibration config: ") + e.what());
  }
  return cfg;
}

PredictionSet load_set(const GridPtr& grid, const fs::path& path, SetKind kind) {
  const auto raw = io::read_predictions(path);
  return bind_predictions(grid, raw, kind);
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension();
  p += suffix;
  return p;
}

void ensure_parent(const fs::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  fs::path out_dir;
  fs::path grid_file;
  int rows = 0;
  int cols = 0;
  int scatter = 0;
  std::vector<double> box{0.1, 0.5, 0.6, 1.0};
  std::vector<double> noise{0.02, 0.02};
  double noise_corr = 0.0;
  double mean_shrink = 1.0;
  int members = 1;
  int n_per_point = 256;
  int n_test = 1000;
  double member_corr = 1.0;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  if (!a.grid_file.empty()) {
    const CosmologyGrid grid = io::read_grid(a.grid_file);
    spec.points.assign(grid.points().begin(), grid.points().end());
  }
  spec.grid_rows = a.rows;
  spec.grid_cols = a.cols;
  spec.grid_scatter = a.scatter;
  spec.box_lo = Vec2(a.box[0], a.box[2]);
  spec.box_hi = Vec2(a.box[1], a.box[3]);
  spec.noise_sigma = Vec2(a.noise[0], a.noise[1]);
  spec.noise_corr = a.noise_corr;
  spec.mean_shrink = a.mean_shrink;
  spec.members = a.members;
  spec.n_per_point = a.n_per_point;
  spec.n_test = a.n_test;
  spec.member_corr = a.member_corr;
  spec.seed = g.seed;

  const SyntheticData data = simulate(spec);

  std::ostringstream c;
  c << "rng=" << Philox::kName << " seed=" << g.seed << "\n"
    << "noise_sigma=" << io::format_double(a.noise[0]) << "," << io::format_double(a.noise[1])
    << " noise_corr=" << io::format_double(a.noise_corr)
    << " mean_shrink=" << io::format_double(a.mean_shrink) << " members=" << a.members
    << " n_per_point=" << a.n_per_point << " n_test=" << a.n_test
    << " member_corr=" << io::format_double(a.member_corr);
  const std::string comment = c.str();

  fs::create_directories(a.out_dir);
  io::atomic_write(a.out_dir / "grid.csv", io::format_grid(*data.grid));
  io::atomic_write(a.out_dir / "validation.csv", io::format_predictions(data.validation, comment));
  io::atomic_write(a.out_dir / "test.csv", io::format_predictions(data.test, comment));
  io::atomic_write(a.out_dir / "truth.csv", io::format_truths(data.truths, comment));
  out << "grid points: " << data.grid->size() << "\n"
      << "validation rows: " << data.validation.size() << "\n"
      << "test rows: " << data.test.size() << " (" << data.truths.size() << " maps)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  fs::path val;
  fs::path grid;
  fs::path out;
  CalibrationOverrides overrides;
};

int cmd_calibrate(const Globals& g, const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
  const CalibrationConfig cfg = resolve_config(g, a.overrides);
  const auto grid = std::make_shared<const CosmologyGrid>(io::read_grid(a.grid));
  const PredictionSet val = load_set(grid, a.val, SetKind::Validation);
  const CalibratedLikelihood model = calibrate_full(val, cfg);

  ensure_parent(a.out);
  io::write_model(a.out, model);

  long n_min = model.moments.front().n_samples;
  long n_max = n_min;
  for (const auto& m : model.moments) {
    n_min = std::min(n_min, m.n_samples);
    n_max = std::max(n_max, m.n_samples);
  }
  out << "tau: " << io::format_double(model.tau) << "\n"
      << "grid points: " << grid->size() << "\n"
      << "samples per point: min " << n_min << ", max " << n_max << "\n"
      << "members: " << val.members().size() << "\n";
  for (const auto& w : model.warnings) err << "warning: " << w << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  fs::path test;
  fs::path model;
  fs::path out;
  fs::path ensemble_out;
  bool hartlap_in_logdet = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  CalibratedLikelihood model = io::read_model(a.model);
  const PredictionSet test = load_set(model.grid, a.test, SetKind::Test);
  LikelihoodOptions opts;
  opts.hartlap_in_logdet = a.hartlap_in_logdet;
  const GridLikelihood lik(std::move(model), opts);
  BatchResult batch = infer_batch(test, lik);
  for (auto& r : batch.results)
    if (r.status == PosteriorStatus::Ok) r.sigma = r.sigma.cwiseMax(Vec2::Constant(kSigmaFloor));

  ensure_parent(a.out);
  const fs::path sidecar = a.ensemble_out.empty() ? sibling(a.out, ".ensemble.csv") : a.ensemble_out;
  io::atomic_write(a.out, io::format_results(batch));
  io::atomic_write(sidecar, io::format_ensemble(batch));

  std::size_t flagged = 0;
  for (const auto& r : batch.results)
    if (r.status != PosteriorStatus::Ok) {
      ++flagged;
      err << "warning: posterior underflow for map '" << r.map_id << "'\n";
    }
  out << "maps: " << batch.results.size() << "\n"
      << "members: " << batch.member_ids.size() << "\n"
      << "flagged: " << flagged << "\n";
  return flagged > 0 ? kExitUnderflow : kExitOk;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  fs::path results;
  fs::path truth;
  fs::path grid;
  fs::path out;
  fs::path per_cosmology;
};

int cmd_score(const Globals& g, const ScoreArgs& a, std::ostream& out) {
  const CosmologyGrid grid = io::read_grid(a.grid);
  const auto results = io::read_results(a.results);
  const auto truths = io::read_truths(a.truth);
  std::set<std::string> result_ids;
  for (const auto& r : results) result_ids.insert(r.map_id);
  for (const auto& t : truths)
    if (!result_ids.count(t.map_id))
      throw Error(ErrorCode::MissingTruth, "truth map '" + t.map_id + "' has no result row");
  const ScoreReport report = evaluate(results, truths, grid, g.lambda);

  ensure_parent(a.out);
  const fs::path table = a.per_cosmology.empty() ? sibling(a.out, ".per_cosmology.csv") : a.per_cosmology;
  io::atomic_write(a.out, io::dump_json(io::report_to_json(report)));
  io::atomic_write(table, io::format_per_cosmology(report));
  out << "mean_score: " << io::format_double(report.mean_score) << "\n"
      << "mse: " << io::format_double(report.mse) << "\n"
      << "coverage: " << io::format_double(report.coverage) << "\n"
      << "maps: " << report.n_maps << " (flagged " << report.n_flagged << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TuneArgs {
  fs::path val;
  fs::path grid;
  fs::path search;
  fs::path out;
  fs::path table;
  fs::path report;
};

int cmd_tune(const Globals& g, const TuneArgs& a, std::ostream& out) {
  const auto grid = std::make_shared<const CosmologyGrid>(io::read_grid(a.grid));
  const PredictionSet val = load_set(grid, a.val, SetKind::Validation);
  const auto candidates = io::read_search_space(a.search);
  const TuneResult tuned = tune_calibration(val, candidates, g.lambda);

  ensure_parent(a.out);
  const fs::path table = a.table.empty() ? sibling(a.out, ".candidates.csv") : a.table;
  const fs::path report = a.report.empty() ? sibling(a.out, ".report.json") : a.report;
  nlohmann::json best = io::config_to_json(tuned.best);
  best["schema"] = io::kSchema;
  io::atomic_write(a.out, io::dump_json(best));
  io::atomic_write(table, io::format_candidates(tuned.table));
  io::atomic_write(report, io::dump_json(io::report_to_json(tuned.report)));
  out << "candidates: " << tuned.table.size() << "\n"
      << "best score: " << io::format_double(tuned.table.front().score) << "\n"
      << "best config: " << io::config_to_json(tuned.best).dump() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct D4Args {
  fs::path map;
  fs::path mask;
  fs::path out_dir;
  bool rect_only = false;
};

int cmd_d4(const D4Args& a, std::ostream& out) {
  Map2D map = io::read_npy_map(a.map);
  if (!a.mask.empty()) map.mask = io::read_npy_mask(a.mask, map.height, map.width);
  fs::create_directories(a.out_dir);
  const std::string stem = a.map.stem().string();
  const auto emit = [&](D4 t) {
    const Map2D img = apply(t, map);
    const std::string name = stem + "_" + to_string(t);
    io::atomic_write(a.out_dir / (name + ".npy"), io::format_npy(img));
    if (img.mask) io::atomic_write(a.out_dir / (name + "_mask.npy"), io::format_npy_mask(img));
    out << name << ".npy " << img.height << "x" << img.width << "\n";
  };
  if (a.rect_only) {
    for (D4 t : kRectElements) emit(t);
  } else {
    for (D4 t : kD4Elements) emit(t);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScArgs {
  std::vector<fs::path> maps;
  fs::path mask;
  fs::path out;
  int J = 6;
  int L = 4;
  bool iso = false;
  int pca = 0;
};

int cmd_sc_extract(const ScArgs& a, std::ostream& out) {
  std::vector<Map2D> maps;
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& p : a.maps) {
    maps.push_back(io::read_npy_map(p));
    ids.push_back(p.stem().string());
    if (!seen.insert(ids.back()).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate map name '" + ids.back() + "'");
    if (maps.back().height != maps.front().height || maps.back().width != maps.front().width)
      throw Error(ErrorCode::ShapeMismatch, p.string() + ": map shape differs from the first map");
  }
  if (!a.mask.empty()) {
    const auto mask = io::read_npy_mask(a.mask, maps.front().height, maps.front().width);
    for (auto& m : maps) m.mask = mask;
  }
  const WaveletBank bank = build_bank(maps.front().height, maps.front().width, a.J, a.L);

  std::vector<std::vector<double>> rows(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const ScatteringVector sv = scattering_cov(maps[i], bank);
    rows[i] = a.iso ? isotropic_reduce(sv) : sv.flatten();
  }

  std::string body;
  body += "# " + std::string(io::kSchema) + " scattering covariance\n";
  body += "# family=" + bank.family + " J=" + std::to_string(a.J) + " L=" + std::to_string(a.L) +
          " maps=" + std::to_string(maps.size()) + "\n";
  body += a.mask.empty() ? "# mask=none\n"
                         : "# mask=zero-fill; means over valid pixels only\n";
  if (a.iso)
    body +=
        "# order=iso: s1[j], s2[j], s3[j1,j2>j1,d](re,im), s4[j1,j2>j1,j3>j1,d](re,im); "
        "d = orientation difference mod L\n";
  else
    body +=
        "# order=full: s1[j,l], s2[j,l], s3[j1,l1,j2>j1,l2](re,im), "
        "s4[j1,l1,j2>j1,l2,j3>j1,l3](re,im); last index fastest\n";

  const std::size_t dim = rows.front().size();
  std::string prefix = "c";
  if (a.pca > 0) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t d = 0; d < dim; ++d)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
    const PcaResult pca = pca_fit_transform(x, a.pca);
    body += "# pca k=" + std::to_string(a.pca) + " input_dim=" + std::to_string(dim) +
            " rank_deficient=" + (pca.model.rank_deficient ? "1" : "0") + "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].assign(static_cast<std::size_t>(a.pca), 0.0);
      for (int k = 0; k < a.pca; ++k) rows[i][static_cast<std::size_t>(k)] = pca.scores(static_cast<Eigen::Index>(i), k);
    }
    prefix = "pc";
  }

  body += "map_id";
  for (std::size_t d = 0; d < rows.front().size(); ++d) body += "," + prefix + std::to_string(d);
  body += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    body += ids[i];
    for (double v : rows[i]) body += "," + io::format_double(v);
    body += "\n";
  }
  ensure_parent(a.out);
  io::atomic_write(a.out, body);
  out << "maps: " << maps.size() << "\n"
      << "columns: " << rows.front().size() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated grid likelihood for ensemble cosmology predictions", "lenslike"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "RNG seed")->envname("LENSLIKE_SEED");
  app.add_option("--lambda", g.lambda, "score MSE weight")
      ->envname("LENSLIKE_LAMBDA")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--config", g.config, "calibration config (JSON)")->envname("LENSLIKE_CONFIG");
  app.add_option("--threads", g.threads, "worker threads (0 = hardware)")
      ->envname("LENSLIKE_THREADS");

  const auto add_overrides = [](CLI::App* sub, CalibrationOverrides& o) {
    sub->add_option("--sigma-bw", o.sigma_bw, "kernel bandwidth scale");
    sub->add_option("--lambda-lw", o.lambda_lw, "shrinkage amplitude");
    sub->add_option("--p-dof", o.p_dof, "temperature target degrees of freedom");
    sub->add_flag("--no-hartlap", o.no_hartlap, "disable the Hartlap factor");
  };

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "draw synthetic validation and test predictions");
  s_sim->add_option("--out-dir", sim.out_dir, "output directory")->required();
  auto* o_gridf = s_sim->add_option("--grid", sim.grid_file, "explicit grid file");
  auto* o_rows = s_sim->add_option("--rows", sim.rows, "lattice rows");
  auto* o_cols = s_sim->add_option("--cols", sim.cols, "lattice columns");
  auto* o_scat = s_sim->add_option("--scatter", sim.scatter, "number of scattered grid points");
  o_gridf->excludes(o_rows)->excludes(o_cols)->excludes(o_scat);
  o_scat->excludes(o_rows)->excludes(o_cols);
  s_sim->add_option("--box", sim.box, "om_lo om_hi s8_lo s8_hi")->expected(4);
  s_sim->add_option("--noise", sim.noise, "generating sigma of (omega_m, s8)")->expected(2);
  s_sim->add_option("--noise-corr", sim.noise_corr, "generating correlation");
  s_sim->add_option("--mean-shrink", sim.mean_shrink, "regression of the mean towards the centre");
  s_sim->add_option("--members", sim.members, "ensemble members");
  s_sim->add_option("--n-per-point", sim.n_per_point, "validation maps per grid point");
  s_sim->add_option("--n-test", sim.n_test, "test maps");
  s_sim->add_option("--member-corr", sim.member_corr, "shared fraction of member noise");

  CalibrateArgs cal;
  auto* s_cal = app.add_subcommand("calibrate", "fit the calibrated grid likelihood");
  s_cal->add_option("--val", cal.val, "validation predictions")->required();
  s_cal->add_option("--grid", cal.grid, "grid file")->required();
  s_cal->add_option("--out", cal.out, "model file")->required();
  add_overrides(s_cal, cal.overrides);

  InferArgs inf;
  auto* s_inf = app.add_subcommand("infer", "grid posteriors for test predictions");
  s_inf->add_option("--test", inf.test, "test predictions")->required();
  s_inf->add_option("--model", inf.model, "model file")->required();
  s_inf->add_option("--out", inf.out, "results file")->required();
  s_inf->add_option("--ensemble-out", inf.ensemble_out, "ensemble weight sidecar");
  s_inf->add_flag("--hartlap-in-logdet", inf.hartlap_in_logdet,
                  "apply the Hartlap factor to the normalisation too");

  ScoreArgs sc;
  auto* s_sc = app.add_subcommand("score", "score posterior results against truths");
  s_sc->add_option("--results", sc.results, "results file")->required();
  s_sc->add_option("--truth", sc.truth, "truth file")->required();
  s_sc->add_option("--grid", sc.grid, "grid file")->required();
  s_sc->add_option("--out", sc.out, "report (JSON)")->required();
  s_sc->add_option("--per-cosmology", sc.per_cosmology, "per-cosmology table");

  TuneArgs tu;
  auto* s_tu = app.add_subcommand("tune", "cross-validated calibration search");
  s_tu->add_option("--val", tu.val, "validation predictions")->required();
  s_tu->add_option("--grid", tu.grid, "grid file")->required();
  s_tu->add_option("--search", tu.search, "search space (JSON)")->required();
  s_tu->add_option("--out", tu.out, "best config (JSON)")->required();
  s_tu->add_option("--table", tu.table, "candidate table");
  s_tu->add_option("--report", tu.report, "report of the best candidate (JSON)");

  D4Args d4;
  auto* s_d4 = app.add_subcommand("d4", "write the dihedral images of a map");
  s_d4->add_option("--map", d4.map, "map (.npy)")->required();
  s_d4->add_option("--mask", d4.mask, "validity mask (.npy)");
  s_d4->add_option("--out-dir", d4.out_dir, "output directory")->required();
  s_d4->add_flag("--rect-only", d4.rect_only, "only the shape-preserving elements");

  ScArgs sca;
  auto* s_sca = app.add_subcommand("sc-extract", "scattering covariance vectors of maps");
  s_sca->add_option("--maps", sca.maps, "maps (.npy)")->required()->expected(1, -1);
  s_sca->add_option("--mask", sca.mask, "validity mask shared by all maps (.npy)");
  s_sca->add_option("--out", sca.out, "output table")->required();
  s_sca->add_option("--J", sca.J, "number of scales");
  s_sca->add_option("--L", sca.L, "number of orientations");
  s_sca->add_flag("--iso", sca.iso, "orientation-averaged coefficients");
  s_sca->add_option("--pca", sca.pca, "project onto k principal components");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  set_thread_count(g.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : g.threads);

  const bool calibrating = s_cal->parsed() || s_tu->parsed() || s_inf->parsed();
  try {
    if (s_sim->parsed()) return cmd_simulate(g, sim, out);
    if (s_cal->parsed()) return cmd_calibrate(g, cal, out, err);
    if (s_inf->parsed()) return cmd_infer(inf, out, err);
    if (s_sc->parsed()) return cmd_score(g, sc, out);
    if (s_tu->parsed()) return cmd_tune(g, tu, out);
    if (s_d4->parsed()) return cmd_d4(d4, out);
    if (s_sca->parsed()) return cmd_sc_extract(sca, out);
  } catch (const Error& e) {
    err << "error: " << e.what();
    if (e.grid_index()) err << " (grid point " << *e.grid_index() << ")";
    err << "\n";
    return calibrating && is_calibration_error(e.code()) ? kExitCalibration : kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace lenslike
