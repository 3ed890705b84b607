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
#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "maskattack/attack.hpp"
#include "maskattack/audio.hpp"
#include "maskattack/error.hpp"
#include "maskattack/eval.hpp"
#include "maskattack/log.hpp"
#include "maskattack/model.hpp"
#include "maskattack/synth.hpp"

namespace maskattack::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kReportName = "report.json";
constexpr const char* kRunName = "run.json";

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoError, path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "cannot create directory " + dir.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_directory(file.parent_path());
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::kIoError, "no such file: " + path.string());
}

/// Sections of a --config file; missing sections fall back to defaults.
struct FileConfig {
  json synth = json::object();
  json train = json::object();
  json attack = json::object();
};

FileConfig load_config(const std::string& path) {
  FileConfig cfg;
  if (path.empty()) return cfg;
  const json j = read_json(path);
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw Error(ErrorCode::kInvalidArgument, "config section '" + key + "' is not an object");
    if (key == "synth") {
      cfg.synth = value;
    } else if (key == "train") {
      cfg.train = value;
    } else if (key == "attack") {
      cfg.attack = value;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown config section '" + key + "'");
    }
  }
  return cfg;
}

template <typename T>
T parse_section(const json& j, const char* section) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config section '") + section + "': " + e.what());
  }
}

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// Flags that override the attack section of the config file.
struct AttackFlags {
  std::optional<double> alpha;
  std::optional<int> steps;
  std::optional<double> epsilon;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> sigma_init;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App& app) {
    app.add_option("--alpha", alpha, "step size");
    app.add_option("--steps", steps, "step budget N");
    app.add_option("--epsilon", epsilon, "L-infinity bound on the perturbation");
    app.add_option("--lambda1", lambda1, "weight of the mel cosine term");
    app.add_option("--lambda2", lambda2, "weight of the L2 norm term");
    app.add_option("--sigma-init", sigma_init, "std of the initial perturbation");
    app.add_option("--seed", seed, "base seed");
  }

  AttackConfig resolve(const json& section) const {
    AttackConfig cfg = parse_section<AttackConfig>(section, "attack");
    if (alpha) cfg.alpha = *alpha;
    if (steps) cfg.steps = *steps;
    if (epsilon) cfg.epsilon = *epsilon;
    if (lambda1) cfg.lambda1 = *lambda1;
    if (lambda2) cfg.lambda2 = *lambda2;
    if (sigma_init) cfg.sigma_init = *sigma_init;
    if (seed) cfg.seed = *seed;
    validate(cfg);
    return cfg;
  }
};

SynthProfile resolve_profile(const json& section) {
  json profile = section;
  profile.erase("seed");
  profile.erase("augment");
  SynthProfile p = parse_section<SynthProfile>(profile, "synth");
  validate(p, kDefaultSampleRate);
  return p;
}

std::string format_db(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

// --- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> augment;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const FileConfig file = load_config(a.config);
  const SynthProfile profile = resolve_profile(file.synth);
  const std::uint64_t seed = a.seed.value_or(file.synth.value("seed", std::uint64_t{1}));
  const int augment = a.augment.value_or(file.synth.value("augment", 8));
  if (augment < 0) throw Error(ErrorCode::kInvalidArgument, "--augment must be >= 0");

  ensure_directory(a.out);
  const auto dataset = build_dataset(profile, augment, seed);
  json items = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03zu.wav", dataset[i].clean ? "clean" : "aug", i);
    const std::size_t clamped = save_wav(dataset[i].clip, fs::path(a.out) / name);
    if (clamped > 0) log::warn(std::string(name) + ": " + std::to_string(clamped) + " samples clamped");
    items.push_back({{"wav", name}, {"transcript", dataset[i].transcript}, {"clean", dataset[i].clean}});
  }
  const json manifest{{"seed", seed},
                      {"augment", augment},
                      {"sample_rate", kDefaultSampleRate},
                      {"profile", profile},
                      {"items", items}};
  write_file(fs::path(a.out) / kManifestName, manifest.dump(2) + "\n");
  out << "wrote " << dataset.size() << " clips to " << a.out << "\n";
  return kExitOk;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string curve;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<int> jobs;
};

std::vector<LabeledClip> load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  require_file(manifest_path);
  const json manifest = read_json(manifest_path);
  std::vector<LabeledClip> dataset;
  try {
    for (const auto& item : manifest.at("items")) {
      LabeledClip c;
      c.clip = load_wav(dir / item.at("wav").get<std::string>());
      c.transcript = item.at("transcript").get<std::string>();
      c.clean = item.value("clean", false);
      dataset.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoError, manifest_path.string() + ": " + e.what());
  }
  return dataset;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const FileConfig file = load_config(a.config);
  TrainConfig cfg = parse_section<TrainConfig>(file.train, "train");
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.steps = *a.steps;
  cfg.jobs = a.jobs.value_or(1);
  validate(cfg);

  const auto dataset = load_dataset(a.dataset);
  ensure_parent(a.out);
  const TrainResult result = train(dataset, cfg);
  save_checkpoint(result.checkpoint, a.out);

  const fs::path curve_path = a.curve.empty() ? fs::path(a.out + ".curve.csv") : fs::path(a.curve);
  std::ostringstream curve;
  curve << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < result.curve.size(); ++i) curve << i << ',' << result.curve[i] << '\n';
  write_file(curve_path, curve.str());

  out << "clean exact match: " << result.clean_matches << "/" << result.clean_total << "\n";
  out << "checkpoint " << a.out << " (" << checkpoint_hash(result.checkpoint) << ")\n";
  return result.converged ? kExitOk : kExitNotConverged;
}

// --- attack --------------------------------------------------------------

struct AttackArgs {
  std::string checkpoint;
  std::string select;
  std::string mute;
  std::string out;
  std::string method = "sma";
  std::string config;
  AttackFlags flags;
};

/// Highest-SNR x' whose 16-bit rendering still decodes as the target.
const AttackSuccess* pick_storable(const AcousticModel& model, const AttackResult& result) {
  std::vector<const AttackSuccess*> order;
  for (const auto& s : result.successes) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const AttackSuccess* l, const AttackSuccess* r) { return l->snr_db > r->snr_db; });
  for (const AttackSuccess* s : order) {
    if (model.transcribe(quantize(s->clip)) == result.y_select) return s;
  }
  return nullptr;
}

int cmd_attack(const AttackArgs& a, std::ostream& out) {
  const FileConfig file = load_config(a.config);
  AttackConfig cfg = a.flags.resolve(file.attack);
  cfg.keep_clips = true;
  cfg.record_trace = true;
  const AttackMethod method = parse_method(a.method);
  const SynthProfile profile = resolve_profile(file.synth);
  require_file(a.checkpoint);
  const ModelCheckpoint ckpt = load_checkpoint(a.checkpoint);
  ensure_parent(a.out);

  const AttackResult result = run_trial(ckpt, a.select, a.mute, cfg, method, profile);

  std::ostringstream trace;
  trace << "step,l_adv,l_mel,l_p,total,decoded,snr_db\n" << std::setprecision(17);
  for (const auto& r : result.trace) {
    trace << r.step << ',' << r.l_adv << ',' << r.l_mel << ',' << r.l_p << ',' << r.total << ",\"" << r.decoded
          << "\"," << r.snr_db << '\n';
  }
  write_file(a.out + ".trace.csv", trace.str());

  json summary = result;
  summary["config"] = cfg;
  summary["checkpoint_hash"] = checkpoint_hash(ckpt);
  summary["wav"] = nullptr;
  const AcousticModel model(ckpt);
  if (result.succeeded()) {
    const AttackSuccess* chosen = pick_storable(model, result);
    if (chosen == nullptr) {
      log::warn("no x' survives 16-bit quantization; writing the highest-SNR one anyway");
      chosen = result.best();
    }
    save_wav(chosen->clip, a.out + ".wav");
    summary["wav"] = fs::path(a.out + ".wav").filename().string();
    summary["wav_step"] = chosen->step;
    summary["wav_snr_db"] = chosen->snr_db;
  }
  write_file(a.out + ".json", summary.dump(2) + "\n");

  if (!result.succeeded()) {
    out << "no success within " << cfg.steps << " steps\n";
    return kExitNoSuccess;
  }
  out << result.successes.size() << " adversarial examples, best SNR " << format_db(result.best()->snr_db)
      << " dB\n";
  return kExitOk;
}

// --- grid / transfer -----------------------------------------------------

struct GridArgs {
  std::string checkpoint;
  std::string method = "sma";
  std::string out;
  std::string config;
  std::string transfer_to;
  int jobs = 1;
  AttackFlags flags;
};

void write_grid_outputs(const EvalReport& report, const fs::path& dir, int jobs) {
  emit_report(report, dir / kReportName, ReportFormat::kJson);
  emit_report(report, dir / "trials.csv", ReportFormat::kCsv);
  const json timing{{"wall_clock_s", report.wall_clock_s}, {"jobs", jobs}, {"trials", report.trials.size()}};
  write_file(dir / "timing.json", timing.dump(2) + "\n");
}

void print_summary(const EvalReport& report, std::ostream& out) {
  out << to_string(report.method) << ": SRoA " << format_db(report.sroa_percent) << "% over "
      << report.trials.size() << " trials";
  if (report.snr) out << ", mean best SNR " << format_db(report.snr->mean) << " dB";
  out << "\n";
  if (report.transfer && report.transfer->mean_rate) {
    out << "transfer rate " << format_db(100.0 * *report.transfer->mean_rate) << "% over "
        << report.transfer->included_trials << " trials\n";
  }
}

int cmd_grid(const GridArgs& a, std::ostream& out) {
  const FileConfig file = load_config(a.config);
  const AttackConfig cfg = a.flags.resolve(file.attack);
  const AttackMethod method = parse_method(a.method);
  GridOptions options;
  options.jobs = a.jobs;
  options.profile = resolve_profile(file.synth);
  if (options.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "--jobs must be >= 1");
  require_file(a.checkpoint);
  const ModelCheckpoint ckpt = load_checkpoint(a.checkpoint);
  std::optional<ModelCheckpoint> target;
  if (!a.transfer_to.empty()) {
    require_file(a.transfer_to);
    target = load_checkpoint(a.transfer_to);
    options.transfer_target = &*target;
  }
  const fs::path dir = a.out;
  ensure_directory(dir);

  const EvalReport report = run_grid(ckpt, command_set(), cfg, method, options);
  write_grid_outputs(report, dir, a.jobs);
  const json run{{"checkpoint", fs::absolute(a.checkpoint).lexically_normal().string()},
                 {"profile", options.profile}};
  write_file(dir / kRunName, run.dump(2) + "\n");
  print_summary(report, out);
  return kExitOk;
}

struct TransferArgs {
  std::string source_dir;
  std::string target;
  std::string out;
  int jobs = 1;
};

int cmd_transfer(const TransferArgs& a, std::ostream& out) {
  const fs::path dir = a.source_dir;
  require_file(dir / kReportName);
  require_file(dir / kRunName);
  require_file(a.target);
  const EvalReport source = read_json(dir / kReportName).get<EvalReport>();
  const json run = read_json(dir / kRunName);
  const fs::path source_ckpt_path = run.at("checkpoint").get<std::string>();
  require_file(source_ckpt_path);
  const ModelCheckpoint source_ckpt = load_checkpoint(source_ckpt_path);
  if (checkpoint_hash(source_ckpt) != source.checkpoint_hash) {
    throw Error(ErrorCode::kCorruptCheckpoint, source_ckpt_path.string() + " no longer matches the source report");
  }
  const ModelCheckpoint target = load_checkpoint(a.target);

  GridOptions options;
  options.jobs = a.jobs;
  options.profile = parse_section<SynthProfile>(run.at("profile"), "profile");
  options.transfer_target = &target;
  if (options.jobs < 1) throw Error(ErrorCode::kInvalidArgument, "--jobs must be >= 1");
  const EvalReport rerun = run_grid(source_ckpt, source.commands, source.config, source.method, options);
  for (std::size_t i = 0; i < rerun.trials.size() && i < source.trials.size(); ++i) {
    if (rerun.trials[i].success != source.trials[i].success ||
        rerun.trials[i].x_prime_count != source.trials[i].x_prime_count) {
      log::warn("trial " + std::to_string(i) + " did not reproduce the source report");
    }
  }

  json per_trial = json::array();
  for (const auto& t : rerun.trials) {
    per_trial.push_back({{"select", t.select_command},
                         {"mute", t.mute_command},
                         {"x_prime_count", t.x_prime_count},
                         {"fraction", t.transfer_fraction ? json(*t.transfer_fraction) : json(nullptr)}});
  }
  const TransferSummary& summary = *rerun.transfer;
  const json report{{"source_checkpoint_hash", rerun.checkpoint_hash},
                    {"target_checkpoint_hash", summary.target_checkpoint_hash},
                    {"method", to_string(rerun.method)},
                    {"mean_rate", summary.mean_rate ? json(*summary.mean_rate) : json(nullptr)},
                    {"included_trials", summary.included_trials},
                    {"excluded_trials", summary.excluded_trials},
                    {"per_trial", per_trial}};
  const fs::path out_path = a.out.empty() ? dir / "transfer.json" : fs::path(a.out);
  ensure_parent(out_path);
  write_file(out_path, report.dump(2) + "\n");
  if (summary.mean_rate) {
    out << "transfer rate " << std::setprecision(6) << *summary.mean_rate << " over " << summary.included_trials
        << " trials (" << summary.excluded_trials << " without X')\n";
  } else {
    out << "transfer rate undefined: no trial produced X'\n";
  }
  return kExitOk;
}

// --- decode --------------------------------------------------------------

int cmd_decode(const std::string& checkpoint, const std::string& wav, std::ostream& out) {
  require_file(checkpoint);
  require_file(wav);
  const ModelCheckpoint ckpt = load_checkpoint(checkpoint);
  const AcousticModel model(ckpt);
  out << model.transcribe(load_wav(wav)) << "\n";
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownCharacter:
      return kExitUsage;
    case ErrorCode::kIoError:
    case ErrorCode::kMalformedWav:
    case ErrorCode::kUnsupportedFormat:
    case ErrorCode::kCorruptCheckpoint:
    case ErrorCode::kVersionMismatch:
      return kExitIo;
    case ErrorCode::kInfeasibleTarget:
    case ErrorCode::kClipTooShort:
      return kExitInfeasible;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selective masking attacks on a toy CTC speech recognizer", "maskattack"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "render the synthetic command corpus");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "dataset seed (default 1)");
  synth_cmd->add_option("--augment", synth.augment, "jittered copies per command (default 8)");
  synth_cmd->add_option("--config", synth.config, "JSON config file");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the acoustic model on a synthesized corpus");
  train_cmd->add_option("dataset", train_args.dataset, "dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "checkpoint path")->required();
  train_cmd->add_option("--curve", train_args.curve, "loss curve CSV (default <out>.curve.csv)");
  train_cmd->add_option("--seed", train_args.seed, "training seed");
  train_cmd->add_option("--steps", train_args.steps, "optimizer steps");
  train_cmd->add_option("--jobs", train_args.jobs, "threads for per-example gradients");
  train_cmd->add_option("--config", train_args.config, "JSON config file");

  AttackArgs attack;
  auto* attack_cmd = app.add_subcommand("attack", "run one attack trial");
  attack_cmd->add_option("checkpoint", attack.checkpoint, "model checkpoint")->required();
  attack_cmd->add_option("select", attack.select, "command the model must output")->required();
  attack_cmd->add_option("mute", attack.mute, "command to mask")->required();
  attack_cmd->add_option("--out", attack.out, "output prefix")->required();
  attack_cmd->add_option("--method", attack.method, "sma, carlini or superimpose");
  attack_cmd->add_option("--config", attack.config, "JSON config file");
  attack.flags.add_to(*attack_cmd);

  GridArgs grid;
  grid.jobs = default_jobs();
  auto* grid_cmd = app.add_subcommand("grid", "attack every ordered pair of distinct commands");
  grid_cmd->add_option("checkpoint", grid.checkpoint, "model checkpoint")->required();
  grid_cmd->add_option("--out", grid.out, "report directory")->required();
  grid_cmd->add_option("--method", grid.method, "sma, carlini or superimpose");
  grid_cmd->add_option("--jobs", grid.jobs, "parallel trials")->capture_default_str();
  grid_cmd->add_option("--transfer-to", grid.transfer_to, "also decode X' with this checkpoint");
  grid_cmd->add_option("--config", grid.config, "JSON config file");
  grid.flags.add_to(*grid_cmd);

  TransferArgs transfer;
  transfer.jobs = default_jobs();
  auto* transfer_cmd = app.add_subcommand("transfer", "replay a grid and decode its X' with another model");
  transfer_cmd->add_option("source", transfer.source_dir, "directory written by grid")->required();
  transfer_cmd->add_option("target", transfer.target, "target checkpoint")->required();
  transfer_cmd->add_option("--out", transfer.out, "transfer report (default <source>/transfer.json)");
  transfer_cmd->add_option("--jobs", transfer.jobs, "parallel trials")->capture_default_str();

  std::string decode_ckpt;
  std::string decode_wav;
  auto* decode_cmd = app.add_subcommand("decode", "print the greedy transcript of a WAV file");
  decode_cmd->add_option("checkpoint", decode_ckpt, "model checkpoint")->required();
  decode_cmd->add_option("wav", decode_wav, "16-bit PCM WAV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*attack_cmd) return cmd_attack(attack, out);
    if (*grid_cmd) return cmd_grid(grid, out);
    if (*transfer_cmd) return cmd_transfer(transfer, out);
    if (*decode_cmd) return cmd_decode(decode_ckpt, decode_wav, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace maskattack::cli
