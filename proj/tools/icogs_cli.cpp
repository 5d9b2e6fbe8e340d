#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "icogs/icogs.h"

namespace {

struct Context {
  icogs_context* ctx = nullptr;
  Context() {
    if (icogs_context_create(&ctx) != ICOGS_OK) std::abort();
  }
  ~Context() { icogs_context_destroy(ctx); }
};

int finish(icogs_context* ctx, icogs_status st) {
  if (st != ICOGS_OK) std::fprintf(stderr, "error: %s\n", icogs_last_error(ctx));
  return icogs_exit_code(st);
}

void print_and_free(char* s) {
  if (!s) return;
  std::printf("%s\n", s);
  icogs_string_free(s);
}

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view Gaussian splatting trainer with geometry-appearance consistency losses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(icogs_version()));

  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (1 = deterministic); default from ICO_THREADS")
      ->envname("ICO_THREADS")
      ->check(CLI::NonNegativeNumber);

  std::string preset, out_dir;
  int views = 3, image_size = 64;
  uint64_t seed = 0;
  bool lighting = false;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--preset", preset, "plane3, occluder, weak-texture or orbit8")->required();
  gen->add_option("--views", views, "Training views (test views match)");
  gen->add_option("--seed", seed, "Scene seed");
  gen->add_option("--size", image_size, "Image width and height in pixels");
  gen->add_flag("--lighting", lighting, "Enable directional light and per-view exposure");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string config_path, dataset, output;
  std::vector<std::string> sets;
  bool print_config = false;
  auto* train = app.add_subcommand("train", "Train from a JSON config");
  train->add_option("config,--config", config_path, "Config file (omit for defaults)");
  train->add_option("--dataset", dataset, "Shortcut for --set dataset=...");
  train->add_option("--output", output, "Shortcut for --set output=...");
  train->add_option("--set", sets, "Dotted override key=value (repeatable)");
  train->add_flag("--print-config", print_config, "Print the resolved config and exit");

  std::string checkpoint;
  bool as_json = false;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset's test views");
  eval->add_option("checkpoint", checkpoint, "Checkpoint (model.icogs)")->required();
  eval->add_option("dataset", dataset, "Dataset directory")->required();
  eval->add_flag("--json", as_json, "Machine-readable output");

  int ref_id = 0, src_id = 1;
  std::string depth_source = "gt";
  auto* warp = app.add_subcommand("warp-debug", "Write warp, validity, cycle-error and reliability images");
  warp->add_option("--dataset", dataset, "Dataset directory")->required();
  warp->add_option("--ref", ref_id, "Reference view id")->required();
  warp->add_option("--src", src_id, "Source view id")->required();
  warp->add_option("--depth", depth_source, "Depth source")->check(CLI::IsMember({"gt", "checkpoint"}));
  warp->add_option("--checkpoint", checkpoint, "Checkpoint for --depth checkpoint");
  warp->add_option("--out", out_dir, "Output directory")->required();

  auto* rend = app.add_subcommand("render", "Render every dataset view from a checkpoint");
  rend->add_option("checkpoint", checkpoint, "Checkpoint (model.icogs)")->required();
  rend->add_option("dataset", dataset, "Dataset directory")->required();
  rend->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Context c;
  icogs_context_set_threads(c.ctx, threads);
  icogs_context_set_log(c.ctx, log_line, nullptr);

  if (*gen) return finish(c.ctx, icogs_gen(c.ctx, preset.c_str(), views, seed, image_size, lighting, out_dir.c_str()));

  if (*train) {
    std::vector<std::string> all;
    if (!dataset.empty()) all.push_back("dataset=\"" + dataset + "\"");
    if (!output.empty()) all.push_back("output=\"" + output + "\"");
    all.insert(all.end(), sets.begin(), sets.end());
    const auto ptrs = c_strings(all);
    const char* cfg = config_path.empty() ? nullptr : config_path.c_str();
    char* text = nullptr;
    icogs_status st = print_config ? icogs_resolve_config(c.ctx, cfg, ptrs.data(), ptrs.size(), &text)
                                   : icogs_train(c.ctx, cfg, ptrs.data(), ptrs.size(), &text);
    print_and_free(text);
    return finish(c.ctx, st);
  }

  if (*eval) {
    char* text = nullptr;
    icogs_status st = as_json ? icogs_eval(c.ctx, checkpoint.c_str(), dataset.c_str(), &text, nullptr)
                              : icogs_eval(c.ctx, checkpoint.c_str(), dataset.c_str(), nullptr, &text);
    if (text && !as_json) {
      std::fputs(text, stdout);
      icogs_string_free(text);
    } else {
      print_and_free(text);
    }
    return finish(c.ctx, st);
  }

  if (*warp) {
    char* text = nullptr;
    icogs_status st = icogs_warp_debug(c.ctx, dataset.c_str(), ref_id, src_id, depth_source.c_str(),
                                       checkpoint.empty() ? nullptr : checkpoint.c_str(), out_dir.c_str(), &text);
    print_and_free(text);
    return finish(c.ctx, st);
  }

  return finish(c.ctx, icogs_render(c.ctx, checkpoint.c_str(), dataset.c_str(), out_dir.c_str()));
}
