#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lenslike/d4.hpp"
#include "lenslike/grid.hpp"
#include "lenslike/posterior.hpp"
#include "lenslike/scoring.hpp"

namespace lenslike::io {

inline constexpr const char* kSchema = "lenslike/1";

// Comma-separated table: '#' lines and blank lines are skipped, the first
// remaining line is the header.
struct Table {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  // Throws Parse if the column is absent.
  std::size_t column(std::string_view name) const;
  [[noreturn]] void fail(std::size_t row, const std::string& what) const;
};

Table read_table(const std::filesystem::path& path);
Table parse_table(std::string_view text, const std::filesystem::path& source = "<memory>");

// Shortest decimal that parses back to the same double ("nan", "inf" for
// non-finite values).
std::string format_double(double v);
double parse_double(std::string_view s);

// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// grid: index,omega_m,s8
CosmologyGrid read_grid(const std::filesystem::path& path);
std::string format_grid(const CosmologyGrid& grid);

// predictions: member_id,map_id,omega_m_true,s8_true,pred_omega_m,pred_s8
std::vector<RawRecord> read_predictions(const std::filesystem::path& path);
std::string format_predictions(std::span<const RawRecord> records,
                               std::string_view comment = {});

// truth: map_id,omega_m_true,s8_true
std::vector<Truth> read_truths(const std::filesystem::path& path);
std::string format_truths(std::span<const Truth> truths, std::string_view comment = {});

// results: map_id,omega_m_post,s8_post,sigma_omega_m,sigma_s8,top_index,entropy,status
std::string format_results(const BatchResult& batch);
// ensemble sidecar: member_id,nll,weight
std::string format_ensemble(const BatchResult& batch);
std::vector<PosteriorResult> read_results(const std::filesystem::path& path);

nlohmann::json config_to_json(const CalibrationConfig& cfg);
CalibrationConfig config_from_json(const nlohmann::json& j, CalibrationConfig base = {});
CalibrationConfig read_config(const std::filesystem::path& path, CalibrationConfig base = {});

// {"sigma_bw": [...], "lambda_lw": [...], "p_dof": [...], "hartlap": b,
//  "cov_jitter": x} or {"candidates": [config, ...]}.
std::vector<CalibrationConfig> read_search_space(const std::filesystem::path& path);

nlohmann::json model_to_json(const CalibratedLikelihood& model);
CalibratedLikelihood model_from_json(const nlohmann::json& j);
void write_model(const std::filesystem::path& path, const CalibratedLikelihood& model);
CalibratedLikelihood read_model(const std::filesystem::path& path);

nlohmann::json report_to_json(const ScoreReport& report);
// grid_index,omega_m,s8,mean_score,standard_error,n_maps
std::string format_per_cosmology(const ScoreReport& report);
// rank,position,sigma_bw,lambda_lw,p_dof,hartlap,cov_jitter,score,fold_a,fold_b,error
std::string format_candidates(std::span<const CandidateResult> table);

std::string dump_json(const nlohmann::json& j);

// NumPy .npy arrays (2-D, C order). Maps load as float64; masks accept bool,
// uint8, or any numeric dtype (nonzero = valid).
Map2D read_npy_map(const std::filesystem::path& path);
std::vector<std::uint8_t> read_npy_mask(const std::filesystem::path& path, std::size_t height,
                                        std::size_t width);
std::string format_npy(const Map2D& map);
std::string format_npy_mask(const Map2D& map);

}  // namespace lenslike::io
