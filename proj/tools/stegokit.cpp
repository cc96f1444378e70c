#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stegokit/checkpoint.hpp"
#include "stegokit/propositions.hpp"
#include "stegokit/residual.hpp"
#include "stegokit/stego_sim.hpp"
#include "stegokit/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stegokit;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- --config expansion ----------------------------------------------------

std::string flag_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + flag_value(e);
    return out;
  }
  return v.dump();
}

/// Turns "--config FILE" into flags placed ahead of the explicit ones, so
/// anything given on the command line wins.
std::string config_path;

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::string& path = config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty() || rest.empty()) return rest;
  json cfg;
  try {
    cfg = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw UsageError("config " + path + " must hold a JSON object");
  std::vector<std::string> out{rest.front()};  // subcommand name
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (value.is_boolean()) {
      out.push_back(flag + "=" + (value.get<bool>() ? "true" : "false"));
    } else if (value.is_array() && !value.empty() && value.front().is_string() && key == "checkpoint") {
      for (const auto& e : value) out.insert(out.end(), {flag, e.get<std::string>()});
    } else {
      out.insert(out.end(), {flag, flag_value(value)});
    }
  }
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

/// Every long option of a subcommand with its effective value.
json resolved_config(const CLI::App& app) {
  json j{{"command", app.get_name()}};
  for (const CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    if (names.front() == "config") {
      j["config"] = config_path;
      continue;
    }
    const auto& res = opt->results();
    if (opt->get_expected_max() == 0) {
      j[names.front()] = !res.empty() && res.back() != "false" && res.back() != "0";
    } else if (opt->get_expected_max() > 1) {
      j[names.front()] = res;
    } else if (!res.empty()) {
      j[names.front()] = res.back();
    } else {
      j[names.front()] = opt->get_default_str();
    }
  }
  return j;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    try {
      std::size_t used = 0;
      const std::string item = s.substr(start, end - start);
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("bad " + what + " list '" + s + "'");
    }
    start = end + 1;
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---- model flags -----------------------------------------------------------

struct ModelFlags {
  std::string subnet = "type1";
  int kernels = 5;
  std::string qt = "4:1,4:2,4:4";
  std::string bn = "all";
  bool no_bn = false;
  std::string widths;
  int feature_width = 512;
  std::string head = "800,400,200";

  void add(CLI::App* app) {
    app->add_option("--subnet", subnet, "Subnet type")->check(CLI::IsMember({"type1", "type2"}));
    app->add_option("--kernels", kernels, "DCT kernel bank size")->check(CLI::IsMember({3, 5, 8}));
    app->add_option("--qt", qt, "Q&T groups as T:q pairs");
    app->add_option("--bn", bn, "Batch-norm placement")->check(CLI::IsMember({"all", "no-bn1", "none"}));
    app->add_flag("--no-bn", no_bn, "Drop every batch-norm layer (same as --bn none)");
    app->add_option("--widths", widths, "Subnet conv widths a,b,c (default per subnet type)");
    app->add_option("--feature-width", feature_width, "Features per subnet");
    app->add_option("--head", head, "Hidden FC widths");
  }

  nn::HybridConfig resolve(int input_size) const {
    nn::HybridConfig c;
    c.subnet = subnet == "type2" ? nn::SubnetConfig::type2(input_size) : nn::SubnetConfig::type1(input_size);
    if (!widths.empty()) {
      const auto w = parse_int_list(widths, "width");
      if (w.size() != 3) throw InvalidArgument("--widths needs three values");
      c.subnet.widths = {w[0], w[1], w[2]};
    }
    c.subnet.feature_width = feature_width;
    c.subnet.bn = no_bn ? nn::BnPlacement::none : nn::parse_bn_placement(bn);
    c.kernel_size = kernels;
    c.subnet.input_channels = kernels * kernels;
    c.qt = parse_qt_specs(qt);
    c.head = parse_int_list(head, "head");
    return c;
  }
};

// ---- subcommands -----------------------------------------------------------

struct MakeDatasetFlags {
  std::string covers;
  int synthetic = 0;
  int size = 64, qf = 75;
  double rate = 0.2;
  std::uint64_t seed = 0;
  std::string crop = "left-top";
  std::string out;
};

int cmd_make_dataset(const MakeDatasetFlags& f, const json& resolved) {
  if (f.covers.empty() == (f.synthetic == 0)) throw UsageError("give exactly one of --covers DIR or --synthetic N");
  DatasetConfig cfg;
  cfg.quality = f.qf;
  cfg.rate = f.rate;
  cfg.seed = f.seed;
  cfg.size = f.size;
  cfg.crop = parse_crop_mode(f.crop);
  const auto source = f.covers.empty() ? CoverSource::synthetic_covers(f.synthetic) : CoverSource::directory(f.covers);
  const auto m = build_dataset(source, cfg, f.out);
  print_json({{"config", resolved},
              {"manifest", (fs::path(f.out) / "manifest.jsonl").string()},
              {"pairs", m.records.size()},
              {"train", m.count(Split::train)},
              {"test", m.count(Split::test)}});
  return 0;
}

struct TrainFlags {
  std::string manifest, out;
  TrainConfig train;
  std::uint64_t model_seed = 0;
  bool model_seed_set = false;
  ModelFlags model;
};

int cmd_train(const TrainFlags& f, json resolved) {
  const auto data = load_dataset(f.manifest);
  const auto cfg = f.model.resolve(data.manifest.config.size);
  const std::uint64_t model_seed = f.model_seed_set ? f.model_seed : f.train.seed;
  resolved["model-seed"] = std::to_string(model_seed);
  nn::HybridModel<float> model(cfg, model_seed);
  fs::create_directories(f.out);
  TrainOutputs out{fs::path(f.out) / "metrics.csv", fs::path(f.out) / "model.skcp",
                   {{"cli", resolved}, {"dataset", data.manifest.config.to_json()}},
                   [](const Metrics& m) { std::cerr << metrics_row(m) << std::endl; }};
  const auto r = train(model, data, f.train, out);
  print_json({{"config", resolved},
              {"iterations", r.iterations},
              {"reached_target", r.reached_target},
              {"final_test_accuracy", r.last().test_accuracy},
              {"best_test_accuracy", r.best_accuracy()},
              {"checkpoint", out.checkpoint.string()},
              {"metrics", out.metrics_csv.string()}});
  return 0;
}

struct EvalFlags {
  std::string manifest;
  std::vector<std::string> checkpoints;
  std::string split = "test";
};

/// Feature banks shared between checkpoints with the same front end.
class BankCache {
 public:
  explicit BankCache(const std::vector<LoadedPair>& pairs) : pairs_(pairs) {}
  const FeatureBank& get(const nn::HybridConfig& cfg, int data_size) {
    if (cfg.subnet.input_size != data_size)
      throw InvalidConfiguration("checkpoint expects " + std::to_string(cfg.subnet.input_size) +
                                 "px inputs but the dataset holds " + std::to_string(data_size) + "px images");
    const std::string key = std::to_string(cfg.kernel_size) + "|" + format_qt_specs(cfg.qt);
    auto it = banks_.find(key);
    if (it == banks_.end()) it = banks_.emplace(key, FeatureBank(pairs_, cfg)).first;
    return it->second;
  }

 private:
  const std::vector<LoadedPair>& pairs_;
  std::map<std::string, FeatureBank> banks_;
};

json evaluation_json(const Evaluation& e) {
  return {{"accuracy", e.accuracy}, {"cover_acc", e.cover_acc}, {"stego_acc", e.stego_acc}};
}

int cmd_eval(const EvalFlags& f, const json& resolved, bool ensemble) {
  if (ensemble && (f.checkpoints.size() < 3 || f.checkpoints.size() % 2 == 0))
    throw UsageError("ensemble needs an odd number (>= 3) of checkpoints, got " + std::to_string(f.checkpoints.size()));
  if (!ensemble && f.checkpoints.size() != 1) throw UsageError("eval takes exactly one checkpoint");
  std::vector<LoadedCheckpoint> models;
  for (const auto& path : f.checkpoints) {
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
    models.push_back(load_checkpoint(path));
  }
  const auto data = load_dataset(f.manifest);
  const auto split = parse_split(f.split);
  const auto& pairs = data.split(split);
  BankCache banks(pairs);
  json singles = json::array();
  std::vector<std::vector<int>> votes;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto e = evaluate(models[i].model, banks.get(models[i].model.config(), data.manifest.config.size));
    auto j = evaluation_json(e);
    j["checkpoint"] = f.checkpoints[i];
    j["iteration"] = models[i].iteration;
    singles.push_back(j);
    votes.push_back(e.predicted);
  }
  json out{{"config", resolved}, {"split", f.split}, {"pairs", pairs.size()}};
  if (ensemble) {
    out["models"] = singles;
    out["ensemble"] = evaluation_json(score(ensemble_vote(votes)));
  } else {
    out.update(singles.front());
  }
  print_json(out);
  return 0;
}

struct Prop1Flags {
  std::string manifest, split = "all", histogram_out;
  std::uint64_t seed = 0;
  int kernel_size = 5;
};

int cmd_verify_prop1(const Prop1Flags& f, const json& resolved) {
  auto data = load_dataset(f.manifest);
  std::vector<LoadedPair> pairs;
  if (f.split != "test") pairs.insert(pairs.end(), data.train.begin(), data.train.end());
  if (f.split != "train") pairs.insert(pairs.end(), data.test.begin(), data.test.end());
  const auto r = verify_prop1(pairs, f.seed, f.kernel_size);
  if (!f.histogram_out.empty()) write_text(f.histogram_out, r.histogram.to_text());
  auto j = r.to_json();
  j["config"] = resolved;
  print_json(j);
  return 0;
}

struct Prop2Flags {
  std::string qt = "4:1,4:2,4:4", profile_out;
  std::size_t points = 100000;
  double h = 1e-4;
  std::uint64_t seed = 0;
};

int cmd_verify_prop2(const Prop2Flags& f, const json& resolved) {
  json scans = json::array();
  std::string profile;
  for (const auto& spec : parse_qt_specs(f.qt)) {
    auto j = qt_gradient_scan(spec, f.points, f.h, derive_seed(f.seed, spec.threshold * 1000 + static_cast<int>(spec.step * 16)))
                 .to_json();
    // A point straddling the first positive jump shows the spike.
    j["straddle_z"] = 0.5 * spec.step;
    j["straddle_difference"] = qt_finite_difference(0.5 * spec.step, spec, f.h);
    j["expected_spike"] = 1.0 / (2.0 * f.h);
    scans.push_back(j);
    if (!f.profile_out.empty()) profile += qt_profile_text(spec, f.h, spec.step / 400.0) + "\n\n";
  }
  if (!f.profile_out.empty()) write_text(f.profile_out, profile);
  print_json({{"config", resolved}, {"scans", scans}});
  return 0;
}

int exit_with(ExitCode code, const std::string& msg) {
  std::cerr << "stegokit: " << msg << std::endl;
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steganalysis toolkit: datasets, training, evaluation and front-end diagnostics"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string unused_config;
  auto add_sub = [&](const std::string& name, const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", unused_config, "JSON file whose keys mirror the long flags");
    return sub;
  };

  MakeDatasetFlags md;
  auto* make = add_sub("make-dataset", "Build cover/stego pairs and a split manifest");
  auto* src = make->add_option_group("source");
  src->add_option("--covers", md.covers, "Directory of PGM covers");
  src->add_option("--synthetic", md.synthetic, "Number of synthetic covers")->check(CLI::PositiveNumber);
  make->add_option("--size", md.size, "Crop size in pixels");
  make->add_option("--qf", md.qf, "JPEG quality factor")->check(CLI::Range(1, 100));
  make->add_option("--rate", md.rate, "Fraction of nonzero AC coefficients changed");
  make->add_option("--seed", md.seed, "Dataset seed");
  make->add_option("--crop", md.crop, "Crop position")->check(CLI::IsMember({"left-top", "center"}));
  make->add_option("--out", md.out, "Output directory")->required();

  TrainFlags tf;
  auto* tr = add_sub("train", "Train a hybrid model on a manifest");
  tr->add_option("--manifest", tf.manifest, "Dataset manifest")->required();
  tr->add_option("--out", tf.out, "Output directory for metrics and checkpoints")->required();
  tr->add_option("--base-lr", tf.train.base_lr, "Initial learning rate");
  tr->add_option("--gamma", tf.train.gamma, "Learning-rate decay factor");
  tr->add_option("--stepsize", tf.train.stepsize, "Iterations between decays");
  tr->add_option("--momentum", tf.train.momentum, "SGD momentum");
  tr->add_option("--weight-decay", tf.train.weight_decay, "L2 weight decay");
  tr->add_option("--batch-size", tf.train.batch_size, "Images per batch (covers plus stegos)");
  tr->add_option("--max-iter", tf.train.max_iter, "Training iterations");
  tr->add_option("--seed", tf.train.seed, "Batch order seed");
  tr->add_option("--eval-every", tf.train.eval_every, "Iterations between test evaluations");
  tr->add_option("--checkpoint-every", tf.train.checkpoint_every, "Iterations between checkpoints (0: final only)");
  tr->add_option("--target-accuracy", tf.train.target_accuracy, "Stop at the first evaluation reaching this accuracy");
  tr->add_flag("--shuffle-labels", tf.train.shuffle_labels, "Swap labels of a random half of the pairs (control run)");
  auto* ms = tr->add_option("--model-seed", tf.model_seed, "Weight initialization seed (default: --seed)");
  tf.model.add(tr);

  EvalFlags ef;
  auto* ev = add_sub("eval", "Accuracy of a checkpoint on a split");
  ev->add_option("--manifest", ef.manifest, "Dataset manifest")->required();
  ev->add_option("--checkpoint", ef.checkpoints, "Checkpoint file")->required();
  ev->add_option("--split", ef.split, "Split to score")->check(CLI::IsMember({"train", "test"}));

  EvalFlags enf;
  auto* en = add_sub("ensemble", "Majority vote over an odd number of checkpoints");
  en->add_option("--manifest", enf.manifest, "Dataset manifest")->required();
  en->add_option("--checkpoint", enf.checkpoints, "Checkpoint file (repeat)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  en->add_option("--split", enf.split, "Split to score")->check(CLI::IsMember({"train", "test"}));

  Prop1Flags p1;
  auto* v1 = add_sub("verify-prop1", "Cover-versus-noise magnitude diagnostics on a dataset");
  v1->add_option("--manifest", p1.manifest, "Dataset manifest")->required();
  v1->add_option("--split", p1.split, "Pairs to analyse")->check(CLI::IsMember({"all", "train", "test"}));
  v1->add_option("--seed", p1.seed, "Seed for the random dominance kernels");
  v1->add_option("--kernel-size", p1.kernel_size, "Dominance kernel size")->check(CLI::PositiveNumber);
  v1->add_option("--histogram-out", p1.histogram_out, "Write the averaged histogram as two-column text");

  Prop2Flags p2;
  auto* v2 = add_sub("verify-prop2", "Finite-difference scan of the Q&T map");
  v2->add_option("--qt", p2.qt, "Q&T specs to scan");
  v2->add_option("--points", p2.points, "Accepted sample points per spec")->check(CLI::PositiveNumber);
  v2->add_option("--fd-step", p2.h, "Central-difference step");
  v2->add_option("--seed", p2.seed, "Sampling seed");
  v2->add_option("--profile-out", p2.profile_out, "Write z/difference profiles as two-column text");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  } catch (const UsageError& e) {
    return exit_with(ExitCode::usage, e.what());
  } catch (const IoError& e) {
    return exit_with(ExitCode::io, e.what());
  }

  try {
    if (*make) return cmd_make_dataset(md, resolved_config(*make));
    if (*tr) {
      tf.model_seed_set = ms->count() > 0;
      return cmd_train(tf, resolved_config(*tr));
    }
    if (*ev) return cmd_eval(ef, resolved_config(*ev), false);
    if (*en) return cmd_eval(enf, resolved_config(*en), true);
    if (*v1) return cmd_verify_prop1(p1, resolved_config(*v1));
    if (*v2) return cmd_verify_prop2(p2, resolved_config(*v2));
  } catch (const UsageError& e) {
    return exit_with(ExitCode::usage, e.what());
  } catch (const InvalidArgument& e) {
    return exit_with(ExitCode::usage, e.what());
  } catch (const InvalidConfiguration& e) {
    return exit_with(ExitCode::usage, e.what());
  } catch (const IoError& e) {
    return exit_with(ExitCode::io, e.what());
  } catch (const IntegrityError& e) {
    return exit_with(ExitCode::integrity, e.what());
  } catch (const DivergenceError& e) {
    return exit_with(ExitCode::divergence, e.what());
  } catch (const EmptyHistogram& e) {
    return exit_with(ExitCode::integrity, e.what());
  } catch (const fs::filesystem_error& e) {
    return exit_with(ExitCode::io, e.what());
  }
  return static_cast<int>(ExitCode::usage);
}
