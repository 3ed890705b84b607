// Copyright 2026 The maskattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "maskattack/attack.hpp"
#include "maskattack/model.hpp"
#include "maskattack/synth.hpp"

namespace maskattack {

enum class AttackMethod { kSma, kCarlini, kSuperimpose };

std::string to_string(AttackMethod method);
AttackMethod parse_method(std::string_view name);

inline constexpr int kReportVersion = 1;

struct Trial {
  int index = 0;
  std::string select_command;
  std::string mute_command;
  bool success = false;
  std::optional<double> best_snr_db;
  std::optional<double> mean_snr_db;
  std::optional<int> first_success_step;
  int x_prime_count = 0;
  /// Empty on success; otherwise "budget_exhausted" or "<ErrorCode>: detail".
  std::string reason;
  /// Stored x' that failed the independent re-check.
  int verification_violations = 0;
  std::optional<double> superimpose_scale;
  /// Fraction of X' that the transfer model also decodes as the selected
  /// command; absent when no transfer model was given or X' is empty.
  std::optional<double> transfer_fraction;

  bool operator==(const Trial&) const = default;
};

struct SnrSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;

  bool operator==(const SnrSummary&) const = default;
};

struct TransferSummary {
  std::string target_checkpoint_hash;
  std::optional<double> mean_rate;
  int included_trials = 0;
  int excluded_trials = 0;

  bool operator==(const TransferSummary&) const = default;
};

struct EvalReport {
  int version = kReportVersion;
  AttackMethod method = AttackMethod::kSma;
  std::vector<std::string> commands;
  AttackConfig config;
  std::string checkpoint_hash;
  std::vector<Trial> trials;
  double sroa_percent = 0.0;
  std::optional<SnrSummary> snr;
  int verification_violations = 0;
  std::optional<TransferSummary> transfer;
  /// Seconds spent in run_grid. Not serialized, so reports stay comparable
  /// byte for byte across runs.
  double wall_clock_s = 0.0;

  bool operator==(const EvalReport&) const = default;
};

struct GridOptions {
  int jobs = 1;
  SynthProfile profile = default_profile();
  /// When set, every trial's X' is also decoded by this model.
  const ModelCheckpoint* transfer_target = nullptr;
};

/// All ordered pairs of distinct commands (90 for ten commands), in
/// row-major order of (select, mute). Trial i attacks with seed cfg.seed + i.
/// Per-trial errors become failed trials; the grid never aborts.
EvalReport run_grid(const ModelCheckpoint& ckpt, const std::vector<std::string>& commands,
                    const AttackConfig& cfg, AttackMethod method, const GridOptions& options = {});

/// Runs one trial exactly as run_grid would, keeping the clips.
AttackResult run_trial(const ModelCheckpoint& ckpt, const std::string& select, const std::string& mute,
                       const AttackConfig& cfg, AttackMethod method, const SynthProfile& profile);

/// Recomputes sroa_percent, the SNR summary and the transfer mean from the trial list.
void aggregate(EvalReport& report);

struct TransferReport {
  std::vector<std::optional<double>> per_trial;  // absent for empty X'
  std::optional<double> mean_rate;
  int excluded = 0;
};

/// Fraction of each result's X' decoded as y_select by the target model.
TransferReport transfer_rate(const std::vector<AttackResult>& source_results, const ModelCheckpoint& target_ckpt);

enum class ReportFormat { kJson, kCsv };

/// JSON writes the full report. CSV writes one row per trial to `path` and the
/// select x mute SNR matrix (0 on the diagonal, blank for failures) to
/// snr_matrix_path(path).
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
std::filesystem::path snr_matrix_path(const std::filesystem::path& csv_path);

std::string report_json_text(const EvalReport& report);

void to_json(nlohmann::json& j, const EvalReport& report);
void from_json(const nlohmann::json& j, EvalReport& report);

}  // namespace maskattack
