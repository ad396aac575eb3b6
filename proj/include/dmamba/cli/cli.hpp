// Copyright 2026 The DMamba Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// Command-line front end: gen-data, train, eval, count, gradcheck, ablate.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmamba/config.hpp"
#include "dmamba/cost/cost_model.hpp"
#include "dmamba/gradcheck_suite.hpp"
#include "dmamba/train/ablate.hpp"
#include "dmamba/train/checkpoint.hpp"

namespace dmamba::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<std::string> out;
};

inline void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory");
}

inline RunConfig resolve(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  if (f.out) c.out = *f.out;
  return c;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

inline std::vector<std::int64_t> parse_int_list(const std::string& s, const char* what) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + tok + "' is not an integer");
    }
  }
  return out;
}

inline std::string require_manifest(const RunConfig& c, const std::string& flag) {
  const std::string m = flag.empty() ? c.manifest : flag;
  if (m.empty()) throw UsageError("a dataset is required: pass --manifest or set \"manifest\" in the config");
  return m;
}

/// Parses `args` (without the program name) and runs the chosen subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Deformable selective-scan decoder toolkit for wide-FoV segmentation", "dmamba"};
  app.require_subcommand(0, 1);

  CommonFlags gen_f, train_f, eval_f, count_f, grad_f, abl_f;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic wide-FoV segmentation dataset");
  add_common(gen, gen_f);
  std::optional<std::int64_t> gen_n;
  std::optional<std::string> gen_camera;
  unsigned gen_threads = 0;
  gen->add_option("-n,--num-samples", gen_n, "Number of samples");
  gen->add_option("--camera", gen_camera, "pinhole | fisheye | equirect");
  gen->add_option("--threads", gen_threads, "Worker threads (0: all cores)");

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  add_common(tr, train_f);
  std::string tr_manifest;
  std::optional<std::int64_t> tr_iters;
  std::optional<double> tr_lr;
  tr->add_option("--manifest", tr_manifest, "Dataset manifest.json");
  tr->add_option("--iterations", tr_iters, "Training iterations");
  tr->add_option("--lr", tr_lr, "Peak learning rate");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_common(ev, eval_f);
  std::string ev_ckpt, ev_manifest, ev_split = "val";
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint written by train")->required();
  ev->add_option("--manifest", ev_manifest, "Dataset manifest.json");
  ev->add_option("--split", ev_split, "train | val");

  auto* cnt = app.add_subcommand("count", "Analytic decoder parameter and FLOP count");
  add_common(cnt, count_f);
  std::string cnt_channels = "96,192,384,768";
  std::int64_t cnt_res = 512;
  cnt->add_option("--channels", cnt_channels, "Stage widths C1,C2,C3,C4");
  cnt->add_option("--res", cnt_res, "Square input resolution")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check of a layer");
  add_common(gc, grad_f);
  std::string gc_module = "all";
  double gc_eps = 1e-5;
  gc->add_option("--module", gc_module, "conv2d | linear | ss2d | dcn | pixel_shuffle | dmf | model | all");
  gc->add_option("--eps", gc_eps, "Central-difference step")->check(CLI::PositiveNumber);

  auto* ab = app.add_subcommand("ablate", "Train every variant of one design axis over several seeds");
  add_common(ab, abl_f);
  std::string ab_axis, ab_manifest, ab_seeds = "0,1,2";
  ab->add_option("--axis", ab_axis, "scan | deformable | upsample")->required();
  ab->add_option("--manifest", ab_manifest, "Dataset manifest.json");
  ab->add_option("--seeds", ab_seeds, "Comma-separated seeds (at least 3)");

  std::vector<const char*> argv{"dmamba"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    err << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      RunConfig c = resolve(gen_f);
      if (gen_f.seed) c.data.seed = *gen_f.seed;
      if (gen_n) c.data.num_samples = *gen_n;
      if (gen_camera) {
        try {
          c.data.camera = data::camera_from_name(*gen_camera);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      const auto m = data::gen_dataset(c.data, c.out, gen_threads);
      out << "wrote " << m.samples.size() << " samples (" << m.count("train") << " train, " << m.count("val")
          << " val, camera " << m.camera << ") to " << (std::filesystem::path(c.out) / "manifest.json").string() << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      RunConfig c = resolve(train_f);
      if (tr_iters) c.train.iterations = *tr_iters;
      if (tr_lr) c.train.lr = *tr_lr;
      if (c.train.warmup > c.train.iterations) c.train.warmup = c.train.iterations;
      c.manifest = require_manifest(c, tr_manifest);
      const auto manifest = data::read_manifest(c.manifest);
      const auto train_set = data::load_split(c.manifest, "train");
      c.model.decoder.num_classes = train_set.num_classes;
      const std::filesystem::path dir = c.out;
      std::filesystem::create_directories(dir);
      write_file(dir / "config.json", to_json(c).dump(2) + "\n");
      nn::Rng rng(c.seed);
      SegModel<float> model(c.model, rng);
      std::ofstream log(dir / "loss.log", std::ios::binary);
      const auto r = train::train_model(model, train_set, c.train, &log);
      const auto ckpt = (dir / "model.dmts").string();
      train::save_model(ckpt, model, manifest.classes);
      out << "trained " << c.train.iterations << " iterations on " << train_set.size() << " samples; final loss "
          << std::fixed << std::setprecision(6) << (r.losses.empty() ? 0.0 : r.losses.back()) << "\n"
          << "checkpoint " << ckpt << "\n";
      return kExitOk;
    }

    if (ev->parsed()) {
      RunConfig c = resolve(eval_f);
      const std::string manifest_path = require_manifest(c, ev_manifest);
      const auto manifest = data::read_manifest(manifest_path);
      const auto model = train::load_model<float>(ev_ckpt);
      const auto set = data::load_split(manifest_path, ev_split);
      if (set.size() == 0) throw UsageError("split '" + ev_split + "' is empty");
      const auto m = train::evaluate(*model, set);
      out << train::format_metrics_text(m, manifest.classes);
      if (eval_f.out) write_file(std::filesystem::path(*eval_f.out) / ("metrics_" + ev_split + ".txt"), train::format_metrics_kv(m));
      return kExitOk;
    }

    if (cnt->parsed()) {
      RunConfig c = resolve(count_f);
      const auto ch = parse_int_list(cnt_channels, "--channels");
      if (ch.size() != 4) throw UsageError("--channels needs exactly four widths");
      for (auto v : ch) {
        if (v <= 0 || v % 2) throw UsageError("--channels: widths must be positive and even");
      }
      if (cnt_res % 32) throw UsageError("--res must be a multiple of 32");
      // Without a config file the published 13-class setting is counted.
      auto dcfg = count_f.config.empty() ? decoder::DecoderConfig{} : c.model.decoder;
      dcfg.channels = {ch[0], ch[1], ch[2], ch[3]};
      const auto rep = cost::decoder_cost(dcfg, cnt_res, cnt_res);
      out << cost::format_text(rep);
      std::ostringstream kv;
      kv << cost::format_kv(rep);
      out << std::fixed << std::setprecision(2) << "\nparams " << static_cast<double>(rep.params()) / 1e6
          << " M, FLOPs " << static_cast<double>(rep.flops_toolkit()) / 1e9 << " G (toolkit convention), "
          << static_cast<double>(rep.flops_all()) / 1e9 << " G (all multiply-adds)\n";
      for (const auto& t : cost::published_tables()) {
        if (t.channels != dcfg.channels) continue;
        const double p = static_cast<double>(rep.params()) / 1e6, f = static_cast<double>(rep.flops_toolkit()) / 1e9;
        out << std::setprecision(1) << "target (" << t.backbone << "): params " << t.ours.params_m << " M (" << std::showpos
            << 100 * (p / t.ours.params_m - 1) << "%), FLOPs " << std::noshowpos << t.ours.flops_g << " G (" << std::showpos
            << 100 * (f / t.ours.flops_g - 1) << "%)" << std::noshowpos << "\n";
        kv << "target.params_m=" << t.ours.params_m << "\ntarget.flops_g=" << t.ours.flops_g << "\n";
        break;
      }
      out << "\n" << cost::format_text(cost::efficiency_report(dcfg, cnt_res));
      if (count_f.out) write_file(std::filesystem::path(*count_f.out) / "cost.txt", kv.str());
      return kExitOk;
    }

    if (gc->parsed()) {
      const std::uint64_t seed = grad_f.seed.value_or(0);
      std::vector<std::string> names;
      if (gc_module == "all") {
        names = gradcheck::case_names();
      } else {
        const auto& known = gradcheck::case_names();
        if (std::find(known.begin(), known.end(), gc_module) == known.end()) {
          throw UsageError("unknown --module '" + gc_module + "'");
        }
        names = {gc_module};
      }
      bool ok = true;
      std::ostringstream report;
      for (const auto& n : names) {
        const auto r = gradcheck::run_case(n, gc_eps, seed);
        const bool pass = r.max_rel_error < gradcheck::kTolerance;
        ok = ok && pass;
        report << std::left << std::setw(14) << n << " max_rel_error " << std::scientific << std::setprecision(3)
               << r.max_rel_error << "  coords " << std::setw(6) << r.coords_checked << "  "
               << (pass ? "PASS" : "FAIL") << " (tol 1e-4)\n";
      }
      out << report.str();
      if (grad_f.out) write_file(std::filesystem::path(*grad_f.out) / "gradcheck.txt", report.str());
      return ok ? kExitOk : kExitFailure;
    }

    if (ab->parsed()) {
      RunConfig c = resolve(abl_f);
      train::AblationAxis axis;
      try {
        axis = train::axis_from_name(ab_axis);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::vector<std::uint64_t> seeds;
      for (auto s : parse_int_list(ab_seeds, "--seeds")) seeds.push_back(static_cast<std::uint64_t>(s));
      if (seeds.size() < 3) throw UsageError("--seeds needs at least 3 seeds");
      const std::string manifest_path = require_manifest(c, ab_manifest);
      const auto train_set = data::load_split(manifest_path, "train");
      const auto val_set = data::load_split(manifest_path, "val");
      c.model.decoder.num_classes = train_set.num_classes;
      const auto table = train::run_ablation(axis, c.model, c.train, seeds, train_set, val_set,
                                             [&](const std::string& v, std::uint64_t s, const train::Metrics& m) {
                                               err << v << " seed " << s << ": mIoU " << std::fixed
                                                   << std::setprecision(2) << m.miou << "\n";
                                             });
      out << train::format_ablation_text(table);
      if (abl_f.out) {
        write_file(std::filesystem::path(*abl_f.out) / ("ablation_" + ab_axis + ".txt"),
                   train::format_ablation_text(table) + "\n" + train::format_ablation_kv(table));
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

inline int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace dmamba::cli
