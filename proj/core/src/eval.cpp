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
#include "maskattack/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/log.hpp"

namespace maskattack {
namespace {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

int decoded_matches(const AcousticModel& model, const AttackResult& result) {
  int matches = 0;
  for (const auto& s : result.successes) {
    if (s.clip.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "attack result was produced without keeping clips");
    }
    if (model.transcribe(s.clip) == result.y_select) ++matches;
  }
  return matches;
}

void check_transfer_target(const ModelCheckpoint& target, int sample_rate) {
  if (target.vocabulary != kAlphabet || target.arch.classes != kNumClasses) {
    throw Error(ErrorCode::kVocabularyMismatch, "transfer model uses a different vocabulary");
  }
  if (target.features.sample_rate != sample_rate) {
    throw Error(ErrorCode::kVocabularyMismatch, "transfer model expects " +
                                                    std::to_string(target.features.sample_rate) + " Hz audio");
  }
}

}  // namespace

std::string to_string(AttackMethod method) {
  switch (method) {
    case AttackMethod::kSma: return "sma";
    case AttackMethod::kCarlini: return "carlini";
    case AttackMethod::kSuperimpose: return "superimpose";
  }
  return "sma";
}

AttackMethod parse_method(std::string_view name) {
  if (name == "sma") return AttackMethod::kSma;
  if (name == "carlini") return AttackMethod::kCarlini;
  if (name == "superimpose") return AttackMethod::kSuperimpose;
  throw Error(ErrorCode::kInvalidArgument, "unknown attack method '" + std::string(name) + "'");
}

AttackResult run_trial(const ModelCheckpoint& ckpt, const std::string& select, const std::string& mute,
                       const AttackConfig& cfg, AttackMethod method, const SynthProfile& profile) {
  const int rate = ckpt.features.sample_rate;
  const AudioClip x_select = render_clean(select, profile, rate);
  const AudioClip x_mute = render_clean(mute, profile, rate);
  const LabelSequence target = encode_text(select);
  switch (method) {
    case AttackMethod::kSma: return sma_attack(ckpt, x_select, x_mute, target, cfg, mute);
    case AttackMethod::kCarlini: return carlini_baseline(ckpt, x_select, x_mute, target, cfg, mute);
    case AttackMethod::kSuperimpose:
      return superimpose_baseline(ckpt, x_select, x_mute, target, cfg.superimpose_step, cfg.superimpose_max,
                                  cfg.target_peak, mute);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attack method");
}

EvalReport run_grid(const ModelCheckpoint& ckpt, const std::vector<std::string>& commands,
                    const AttackConfig& cfg, AttackMethod method, const GridOptions& options) {
  validate(cfg);
  validate(ckpt);
  if (options.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
  if (std::set<std::string>(commands.begin(), commands.end()).size() != commands.size()) {
    throw Error(ErrorCode::kInvalidArgument, "commands must be distinct");
  }
  if (options.transfer_target) check_transfer_target(*options.transfer_target, ckpt.features.sample_rate);

  const auto started = std::chrono::steady_clock::now();
  EvalReport report;
  report.method = method;
  report.commands = commands;
  report.config = cfg;
  report.checkpoint_hash = checkpoint_hash(ckpt);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t s = 0; s < commands.size(); ++s) {
    for (std::size_t m = 0; m < commands.size(); ++m) {
      if (s != m) pairs.emplace_back(s, m);
    }
  }
  report.trials.resize(pairs.size());

  auto execute = [&](std::size_t index) {
    Trial& trial = report.trials[index];
    trial.index = static_cast<int>(index);
    trial.select_command = commands[pairs[index].first];
    trial.mute_command = commands[pairs[index].second];
    try {
      AttackConfig trial_cfg = cfg;
      trial_cfg.seed = cfg.seed + index;
      trial_cfg.keep_clips = true;
      trial_cfg.record_trace = false;
      const AttackResult result =
          run_trial(ckpt, trial.select_command, trial.mute_command, trial_cfg, method, options.profile);
      const double bound = method == AttackMethod::kSuperimpose ? std::numeric_limits<double>::infinity()
                                                                : cfg.epsilon;
      trial.verification_violations = verify_result(ckpt, result, bound).violations();
      trial.success = result.succeeded();
      trial.x_prime_count = static_cast<int>(result.successes.size());
      trial.superimpose_scale = result.superimpose_scale;
      if (trial.success) {
        trial.best_snr_db = result.best()->snr_db;
        trial.mean_snr_db = result.mean_snr_db();
        trial.first_success_step = result.successes.front().step;
        if (options.transfer_target) {
          const AcousticModel target(*options.transfer_target);
          trial.transfer_fraction =
              static_cast<double>(decoded_matches(target, result)) / static_cast<double>(result.successes.size());
        }
      } else {
        trial.reason = "budget_exhausted";
      }
    } catch (const std::exception& e) {
      trial.success = false;
      trial.reason = e.what();
    }
    log::info("trial " + std::to_string(index) + " '" + trial.select_command + "' over '" + trial.mute_command +
              "': " + (trial.success ? "success" : trial.reason));
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < pairs.size(); i = next.fetch_add(1)) execute(i);
  };
  const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(options.jobs), pairs.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  }

  if (options.transfer_target) {
    report.transfer = TransferSummary{checkpoint_hash(*options.transfer_target), std::nullopt, 0, 0};
  }
  aggregate(report);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void aggregate(EvalReport& report) {
  int successes = 0;
  int violations = 0;
  std::vector<double> snrs;
  double transfer_sum = 0.0;
  int transfer_included = 0;
  for (const auto& t : report.trials) {
    violations += t.verification_violations;
    if (!t.success) continue;
    ++successes;
    if (t.best_snr_db && std::isfinite(*t.best_snr_db)) snrs.push_back(*t.best_snr_db);
    if (t.transfer_fraction) {
      transfer_sum += *t.transfer_fraction;
      ++transfer_included;
    }
  }
  report.verification_violations = violations;
  report.sroa_percent =
      report.trials.empty() ? 0.0 : 100.0 * successes / static_cast<double>(report.trials.size());
  report.snr.reset();
  if (!snrs.empty()) {
    double sum = 0.0;
    for (double v : snrs) sum += v;
    report.snr = SnrSummary{sum / static_cast<double>(snrs.size()), *std::min_element(snrs.begin(), snrs.end()),
                            *std::max_element(snrs.begin(), snrs.end())};
  }
  if (report.transfer) {
    report.transfer->included_trials = transfer_included;
    report.transfer->excluded_trials = static_cast<int>(report.trials.size()) - transfer_included;
    report.transfer->mean_rate =
        transfer_included > 0 ? std::optional<double>(transfer_sum / transfer_included) : std::nullopt;
  }
}

TransferReport transfer_rate(const std::vector<AttackResult>& source_results, const ModelCheckpoint& target_ckpt) {
  int rate = target_ckpt.features.sample_rate;
  for (const auto& r : source_results) {
    if (!r.normal.empty()) {
      rate = r.normal.sample_rate;
      break;
    }
  }
  check_transfer_target(target_ckpt, rate);
  const AcousticModel target(target_ckpt);
  TransferReport out;
  double sum = 0.0;
  int included = 0;
  for (const auto& result : source_results) {
    if (result.successes.empty()) {
      out.per_trial.emplace_back(std::nullopt);
      ++out.excluded;
      continue;
    }
    const double fraction =
        static_cast<double>(decoded_matches(target, result)) / static_cast<double>(result.successes.size());
    out.per_trial.emplace_back(fraction);
    sum += fraction;
    ++included;
  }
  if (included > 0) out.mean_rate = sum / included;
  return out;
}

std::filesystem::path snr_matrix_path(const std::filesystem::path& csv_path) {
  std::filesystem::path out = csv_path;
  out.replace_extension();
  out += ".snr_matrix.csv";
  return out;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    write_text(path, report_json_text(report));
    return;
  }
  std::ostringstream rows;
  rows << "select,mute,success,snr_db,first_success_step,x_prime_count,mean_snr_db,reason,transfer_fraction\n";
  auto opt = [](const auto& v) { return v ? format_number(static_cast<double>(*v)) : std::string(); };
  for (const auto& t : report.trials) {
    std::string reason = t.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    rows << t.select_command << ',' << t.mute_command << ',' << (t.success ? 1 : 0) << ',' << opt(t.best_snr_db)
         << ',' << opt(t.first_success_step) << ',' << t.x_prime_count << ',' << opt(t.mean_snr_db) << ','
         << reason << ',' << opt(t.transfer_fraction) << '\n';
  }
  write_text(path, rows.str());

  std::ostringstream matrix;
  matrix << "select\\mute";
  for (const auto& c : report.commands) matrix << ',' << c;
  matrix << '\n';
  for (const auto& select : report.commands) {
    matrix << select;
    for (const auto& mute : report.commands) {
      matrix << ',';
      if (select == mute) {
        matrix << '0';
        continue;
      }
      for (const auto& t : report.trials) {
        if (t.select_command == select && t.mute_command == mute && t.success && t.best_snr_db) {
          matrix << format_number(*t.best_snr_db);
        }
      }
    }
    matrix << '\n';
  }
  write_text(snr_matrix_path(path), matrix.str());
}

std::string report_json_text(const EvalReport& report) {
  return nlohmann::json(report).dump(2) + "\n";
}

void to_json(nlohmann::json& j, const EvalReport& report) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : report.trials) {
    trials.push_back({{"index", t.index},
                      {"select", t.select_command},
                      {"mute", t.mute_command},
                      {"success", t.success},
                      {"best_snr_db", optional_json(t.best_snr_db)},
                      {"mean_snr_db", optional_json(t.mean_snr_db)},
                      {"first_success_step", optional_json(t.first_success_step)},
                      {"x_prime_count", t.x_prime_count},
                      {"reason", t.reason},
                      {"verification_violations", t.verification_violations},
                      {"superimpose_scale", optional_json(t.superimpose_scale)},
                      {"transfer_fraction", optional_json(t.transfer_fraction)}});
  }
  nlohmann::json snr = nullptr;
  if (report.snr) snr = {{"mean", report.snr->mean}, {"min", report.snr->min}, {"max", report.snr->max}};
  nlohmann::json transfer = nullptr;
  if (report.transfer) {
    transfer = {{"target_checkpoint_hash", report.transfer->target_checkpoint_hash},
                {"mean_rate", optional_json(report.transfer->mean_rate)},
                {"included_trials", report.transfer->included_trials},
                {"excluded_trials", report.transfer->excluded_trials}};
  }
  j = nlohmann::json{{"version", report.version},
                     {"method", to_string(report.method)},
                     {"commands", report.commands},
                     {"config", report.config},
                     {"checkpoint_hash", report.checkpoint_hash},
                     {"trials", trials},
                     {"scored_trials", report.trials.size()},
                     {"sroa_percent", report.sroa_percent},
                     {"snr_db", snr},
                     {"verification_violations", report.verification_violations},
                     {"transfer", transfer}};
}

void from_json(const nlohmann::json& j, EvalReport& report) {
  report = EvalReport{};
  report.version = j.at("version").get<int>();
  if (report.version != kReportVersion) {
    throw Error(ErrorCode::kVersionMismatch, "report version " + std::to_string(report.version));
  }
  report.method = parse_method(j.at("method").get<std::string>());
  report.commands = j.at("commands").get<std::vector<std::string>>();
  report.config = j.at("config").get<AttackConfig>();
  report.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  for (const auto& t : j.at("trials")) {
    Trial trial;
    trial.index = t.at("index").get<int>();
    trial.select_command = t.at("select").get<std::string>();
    trial.mute_command = t.at("mute").get<std::string>();
    trial.success = t.at("success").get<bool>();
    trial.best_snr_db = optional_from<double>(t, "best_snr_db");
    trial.mean_snr_db = optional_from<double>(t, "mean_snr_db");
    trial.first_success_step = optional_from<int>(t, "first_success_step");
    trial.x_prime_count = t.at("x_prime_count").get<int>();
    trial.reason = t.at("reason").get<std::string>();
    trial.verification_violations = t.at("verification_violations").get<int>();
    trial.superimpose_scale = optional_from<double>(t, "superimpose_scale");
    trial.transfer_fraction = optional_from<double>(t, "transfer_fraction");
    report.trials.push_back(std::move(trial));
  }
  report.sroa_percent = j.at("sroa_percent").get<double>();
  if (!j.at("snr_db").is_null()) {
    const auto& s = j.at("snr_db");
    report.snr = SnrSummary{s.at("mean").get<double>(), s.at("min").get<double>(), s.at("max").get<double>()};
  }
  report.verification_violations = j.at("verification_violations").get<int>();
  if (!j.at("transfer").is_null()) {
    const auto& t = j.at("transfer");
    report.transfer = TransferSummary{t.at("target_checkpoint_hash").get<std::string>(),
                                      optional_from<double>(t, "mean_rate"), t.at("included_trials").get<int>(),
                                      t.at("excluded_trials").get<int>()};
  }
}

}  // namespace maskattack
