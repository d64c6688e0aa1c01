// Command-line front end. Every subcommand reads a run config; failures print
// a single "error: <category>: <message>" line and exit with status 1
// (2 for command-line usage errors).

#include <cstdio>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "heatcorr/log.hpp"
#include "heatcorr/pipeline.hpp"
#include "heatcorr/primitives.hpp"

using namespace heatcorr;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required = true) {
  cmd->add_option("--config", o.config, "Run config file")->check(CLI::ExistingFile)->required(config_required);
  cmd->add_option("--set", o.overrides, "Override a config value, e.g. --set training.subsample=800");
  cmd->add_option("--seed", o.seed, "Override network.seed");
  cmd->add_option("--out", o.out, "Override runtime.output_dir");
  cmd->add_option("--threads", o.threads, "Override runtime.threads");
  cmd->add_flag("--quiet", o.quiet, "Only print warnings and errors");
}

RunConfig load(const CommonOptions& o) {
  std::vector<std::string> overrides = o.overrides;
  if (o.seed) overrides.push_back("network.seed=" + std::to_string(*o.seed));
  if (o.threads) overrides.push_back("runtime.threads=" + std::to_string(*o.threads));
  RunConfig c = o.config.empty() ? parse_config("", fs::current_path(), overrides) : load_config(o.config, overrides);
  if (!o.out.empty()) c.output_dir = fs::absolute(o.out);
  if (o.quiet) log::set_level(log::Level::warn);
  return c;
}

std::vector<std::uint64_t> parse_sizes(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(ErrorCategory::usage, "--synth expects comma-separated vertex counts, got '" + text + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heat-kernel supervised shape correspondence"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOptions common;

  auto* pre = app.add_subcommand("precompute", "Fill the per-mesh cache (basis, descriptors, geodesics if needed)");
  add_common(pre, common);

  bool resume = false;
  auto* tr = app.add_subcommand("train", "Train the network");
  add_common(tr, common);
  tr->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  std::string checkpoint, source, target, infer_out;
  bool dense = false;
  auto* inf = app.add_subcommand("infer", "Match a source mesh to a target mesh");
  add_common(inf, common);
  inf->add_option("--checkpoint", checkpoint, "Checkpoint (default <output_dir>/checkpoint.prms)");
  inf->add_option("--source", source, "Source mesh")->required()->check(CLI::ExistingFile);
  inf->add_option("--target", target, "Target mesh")->required()->check(CLI::ExistingFile);
  inf->add_option("--matches-dir", infer_out, "Where to write matches.txt (default <output_dir>/infer)");
  inf->add_flag("--dense", dense, "Also write the dense soft map (soft_map.qmap)");

  auto* ev = app.add_subcommand("evaluate", "Geodesic error curves on the configured test pairs");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default <output_dir>/checkpoint.prms)");

  std::vector<std::string> bench_meshes;
  std::string synth_sizes;
  Index bench_e = 150;
  double bench_t = 0.01;
  auto* bench = app.add_subcommand("bench-timing", "Time heat kernels against all-pairs geodesics");
  add_common(bench, common, false);
  bench->add_option("--mesh", bench_meshes, "Mesh file (repeatable)")->check(CLI::ExistingFile);
  bench->add_option("--synth", synth_sizes, "Comma-separated vertex counts of generated bumpy tori");
  bench->add_option("--basis-size", bench_e, "Eigenbasis size")->check(CLI::PositiveNumber);
  bench->add_option("--time", bench_t, "Diffusion time")->check(CLI::PositiveNumber);

  std::uint64_t synth_n = 1000, synth_seed = 7;
  std::string synth_out, synth_permuted, synth_gt;
  auto* syn = app.add_subcommand("synth", "Write a synthetic bumpy torus, optionally with a shuffled copy");
  syn->add_option("--vertices", synth_n, "Approximate vertex count")->check(CLI::Range(16, 1 << 22));
  syn->add_option("--seed", synth_seed, "Bump and shuffle seed");
  syn->add_option("--output", synth_out, "Mesh file (.off or .ply)")->required();
  syn->add_option("--permuted", synth_permuted, "Also write a vertex-shuffled copy here");
  syn->add_option("--ground-truth", synth_gt, "Ground truth from --output to --permuted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (pre->parsed()) {
      const CacheReport r = precompute(load(common));
      std::printf("computed %zu, reused %zu, repaired %zu\n", r.computed, r.reused, r.repaired);
    } else if (tr->parsed()) {
      const TrainResult r = train(load(common), resume);
      std::printf("trained %lld iterations, final loss %.6g, checkpoint %s\n", static_cast<long long>(r.iterations_run),
                  r.final_loss, r.checkpoint.string().c_str());
    } else if (inf->parsed()) {
      const RunConfig c = load(common);
      const fs::path ckpt = checkpoint.empty() ? c.output_dir / run_files::checkpoint : fs::path(checkpoint);
      const fs::path dir = infer_out.empty() ? c.output_dir / "infer" : fs::path(infer_out);
      const InferResult r = infer(c, ckpt, source, target, dir, dense);
      std::printf("wrote %zu matches to %s\n", r.map.matches.size(), (dir / "matches.txt").string().c_str());
    } else if (ev->parsed()) {
      const RunConfig c = load(common);
      const fs::path ckpt = checkpoint.empty() ? c.output_dir / run_files::checkpoint : fs::path(checkpoint);
      const EvaluationReport r = evaluate(c, ckpt);
      std::printf("pooled auc %.6f over %zu pairs\n", r.pooled_summary.auc, r.pairs.size());
    } else if (bench->parsed()) {
      const RunConfig c = load(common);
      std::vector<TimingMesh> meshes;
      for (const auto& m : bench_meshes) meshes.push_back({fs::path(m).stem().string(), load_mesh(m)});
      if (!synth_sizes.empty()) {
        for (auto n : parse_sizes(synth_sizes)) {
          meshes.push_back({"torus-" + std::to_string(n), primitives::bumpy_torus(static_cast<Index>(n))});
        }
      }
      const auto rows = bench_timing(meshes, bench_e, bench_t, c.output_dir / "timing");
      std::printf("%-16s %8s %12s %12s %12s\n", "label", "N", "heat_s", "eig_heat_s", "geodesic_s");
      for (const auto& r : rows) {
        std::printf("%-16s %8lld %12.4g %12.4g %12.4g\n", r.label.c_str(), static_cast<long long>(r.vertices),
                    r.heat_seconds, r.eig_heat_seconds, r.geodesic_seconds);
      }
    } else if (syn->parsed()) {
      const TriMesh mesh = primitives::bumpy_torus(static_cast<Index>(synth_n), synth_seed);
      save_mesh(mesh, synth_out);
      if (!synth_permuted.empty()) {
        std::vector<int> perm(static_cast<std::size_t>(mesh.n_vertices()));
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(synth_seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        save_mesh(permute_vertices(mesh, perm), synth_permuted);
        if (!synth_gt.empty()) {
          // new vertex i is old vertex perm[i], so old vertex perm[i] maps to i
          PointMap gt;
          gt.matches.resize(perm.size());
          for (std::size_t i = 0; i < perm.size(); ++i) gt.matches[static_cast<std::size_t>(perm[i])] = static_cast<Index>(i);
          save_matches(gt, synth_gt);
        }
      } else if (!synth_gt.empty()) {
        throw Error(ErrorCategory::usage, "--ground-truth needs --permuted");
      }
      std::printf("wrote %s (%lld vertices)\n", synth_out.c_str(), static_cast<long long>(mesh.n_vertices()));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.category())).c_str(), e.what());
    return e.category() == ErrorCategory::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
