// Command-line front end: generate, train, infer, baseline, eval,
// import-diligent.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "msps/classic.hpp"
#include "msps/dataio.hpp"
#include "msps/evalkit.hpp"
#include "msps/fsutil.hpp"
#include "msps/geom.hpp"
#include "msps/msnet.hpp"
#include "msps/render.hpp"

namespace fs = std::filesystem;
using namespace msps;

namespace {

std::string sample_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", index);
  return buf;
}

// A sample directory, or a directory whose children are sample directories.
std::vector<fs::path> expand_samples(const std::vector<std::string>& roots) {
  std::vector<fs::path> out;
  for (const auto& r : roots) {
    const fs::path root(r);
    if (fs::is_regular_file(root / "manifest.json")) {
      out.push_back(root);
      continue;
    }
    if (!fs::is_directory(root)) throw Error("no such sample directory: " + r);
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::is_regular_file(e.path() / "manifest.json")) children.push_back(e.path());
    }
    if (children.empty()) throw Error("no samples under " + r);
    std::sort(children.begin(), children.end());
    out.insert(out.end(), children.begin(), children.end());
  }
  return out;
}

std::optional<MaterialCategory> parse_category(const std::string& name) {
  for (auto c : {MaterialCategory::Textured, MaterialCategory::GlassLike, MaterialCategory::Metal,
                 MaterialCategory::Random}) {
    if (name == category_name(c)) return c;
  }
  return std::nullopt;
}

void write_normals(const fs::path& out, const NormalMap& n) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_pfm(out, image_from_normals(n));
}

NormalMap load_normals(const std::string& pred, const std::string& mask_path) {
  const FloatImage img = read_pfm(pred);
  Mask mask(img.height * img.width, 1);
  if (!mask_path.empty()) {
    std::size_t h = 0, w = 0;
    mask = decode_pgm(read_file(mask_path), h, w);
    if (h != img.height || w != img.width) throw ShapeError("mask", {img.height, img.width}, {h, w});
  }
  return normals_from_image(img, mask);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale photometric stereo: data generation, training, inference and evaluation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Render synthetic samples");
  std::string gen_out, gen_mesh, gen_category;
  std::size_t gen_count = 1, gen_lights = 100, gen_res = 128, gen_jobs = 0;
  std::uint64_t gen_seed = 0;
  int gen_grid = 96;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Base seed")->required();
  gen->add_option("--mesh", gen_mesh, "OBJ mesh used for every sample instead of random blobs")->check(CLI::ExistingFile);
  gen->add_option("--lights", gen_lights, "Lights per sample")->check(CLI::Range(3, 100000));
  gen->add_option("--res", gen_res, "Image resolution")->check(CLI::Range(8, 8192));
  gen->add_option("--grid", gen_grid, "Marching-cubes cells per axis")->check(CLI::Range(8, 1024));
  gen->add_option("--material", gen_category, "Force a category: textured, glass_like, metal or random");
  gen->add_option("--jobs", gen_jobs, "Worker threads (0 = all cores)");

  // train
  auto* tr = app.add_subcommand("train", "Train the network on sample directories");
  std::vector<std::string> tr_data;
  std::string tr_out, tr_init;
  TrainParams tp;
  NetConfig tr_cfg;
  bool tr_mono = false;
  tr->add_option("--data", tr_data, "Sample directories or parents of sample directories")->required();
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--steps", tp.steps, "Optimiser steps")->required();
  tr->add_option("--lr", tp.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--batch", tp.batch, "Patches per step")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--patch", tp.patch, "Patch size")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--patches", tp.patches_per_sample, "Patches per sample per epoch")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--seed", tp.seed, "Seed for initialisation and sampling")->capture_default_str();
  tr->add_option("--channels", tr_cfg.channels, "Feature channels")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--lights-per-patch", tp.lights_per_patch, "Random light subset per patch (0 = all)");
  tr->add_option("--init", tr_init, "Continue from this checkpoint")->check(CLI::ExistingFile);
  tr->add_flag("--mono", tr_mono, "Single full-resolution stage instead of coarse-to-fine");

  // infer
  auto* inf = app.add_subcommand("infer", "Predict a normal map with a trained checkpoint");
  std::string inf_ckpt, inf_sample, inf_out;
  std::size_t inf_r0 = 0;
  inf->add_option("--ckpt", inf_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--sample", inf_sample, "Sample directory")->required();
  inf->add_option("--out", inf_out, "Output normal map (PFM)")->required();
  inf->add_option("--r0", inf_r0, "Coarsest resolution (default: the checkpoint's)");

  // baseline
  auto* base = app.add_subcommand("baseline", "Least-squares Lambertian normals");
  std::string base_sample, base_out;
  base->add_option("--sample", base_sample, "Sample directory")->required();
  base->add_option("--out", base_out, "Output normal map (PFM)")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Mean angular error of a predicted normal map");
  std::string ev_pred, ev_gt, ev_mask, ev_report, ev_object = "object", ev_method = "method";
  ev->add_option("--pred", ev_pred, "Predicted normals (PFM)")->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt, "Ground-truth normals (PFM)")->check(CLI::ExistingFile);
  ev->add_option("--mask", ev_mask, "Mask (PGM)")->check(CLI::ExistingFile);
  ev->add_option("--report", ev_report, "Benchmark CSV to update and print");
  ev->add_option("--object", ev_object, "Object name recorded in the report")->capture_default_str();
  ev->add_option("--method", ev_method, "Method name recorded in the report")->capture_default_str();

  // import-diligent
  auto* imp = app.add_subcommand("import-diligent", "Convert a DiLiGenT object directory to a sample");
  std::string imp_in, imp_out;
  imp->add_option("--in", imp_in, "DiLiGenT object directory")->required()->check(CLI::ExistingDirectory);
  imp->add_option("--out", imp_out, "Output sample directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "msps: error: " << msg << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*gen) {
      GenerateOptions opt;
      opt.lights = gen_lights;
      opt.resolution = gen_res;
      opt.grid = gen_grid;
      if (!gen_mesh.empty()) {
        std::ifstream in(gen_mesh);
        TriMesh mesh = load_obj(in);
        if (mesh.empty()) throw Error("mesh has no faces: " + gen_mesh);
        fit_to_radius(mesh, 0.95);
        opt.mesh = std::move(mesh);
        opt.mesh_source = "obj:" + fs::path(gen_mesh).filename().string();
      }
      if (!gen_category.empty()) {
        const auto c = parse_category(gen_category);
        if (!c) throw Error("unknown material category '" + gen_category + "'");
        opt.materials.category_probabilities = {0, 0, 0, 0};
        opt.materials.category_probabilities[static_cast<std::size_t>(*c)] = 1.0;
      }
      fs::create_directories(gen_out);
      const std::size_t workers =
          std::max<std::size_t>(1, std::min(gen_count, gen_jobs ? gen_jobs : std::thread::hardware_concurrency()));
      std::atomic<std::size_t> next{0};
      std::mutex failure_lock;
      std::string failure;
      auto work = [&] {
        for (std::size_t i; (i = next++) < gen_count;) {
          try {
            const PsSample s = generate_sample(Rng::derive(gen_seed, i), opt);
            write_sample(fs::path(gen_out) / sample_dir_name(i), s);
          } catch (const std::exception& e) {
            std::lock_guard<std::mutex> g(failure_lock);
            if (failure.empty()) failure = sample_dir_name(i) + ": " + e.what();
            next = gen_count;
          }
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
      work();
      for (auto& t : pool) t.join();
      if (!failure.empty()) throw Error(failure);
      std::cout << "wrote " << gen_count << " samples to " << gen_out << "\n";
    } else if (*tr) {
      std::vector<PsSample> data;
      for (const auto& dir : expand_samples(tr_data)) data.push_back(read_sample(dir));
      tr_cfg.image_channels = data.front().channels() == 1 ? 3 : data.front().channels();
      tr_cfg.multiscale = !tr_mono;
      NetWeights weights = tr_init.empty() ? NetWeights::init(tr_cfg, tp.seed) : load_checkpoint(tr_init);
      std::ostringstream csv;
      csv << "step,loss\n";
      csv.precision(17);
      tp.on_step = [&](std::size_t step, double loss) {
        csv << step << "," << loss << "\n";
        if ((step + 1) % 50 == 0 || step + 1 == tp.steps) {
          std::cerr << "step " << step + 1 << "/" << tp.steps << " loss " << loss << "\n";
        }
      };
      train(weights, data, tp);
      const fs::path out(tr_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      save_checkpoint(out, weights);
      atomic_write(out.string() + ".loss.csv", csv.str());
      std::cout << "trained " << tp.steps << " steps on " << data.size() << " samples; checkpoint " << tr_out << "\n";
    } else if (*inf) {
      NetWeights weights = load_checkpoint(inf_ckpt);
      if (inf_r0 > 0) {
        weights.config.r0 = inf_r0;
        weights.config.validate();
      }
      const PsSample s = read_sample(inf_sample);
      StageTrace trace;
      const NormalMap n = forward_multiscale(weights, s, &trace);
      std::cout << "stages:";
      for (const auto& [h, w] : trace.sizes) std::cout << " " << h << "x" << w;
      std::cout << "\n" << trace.coarse_passes << " coarse + " << trace.refine_passes << " refine stages\n";
      write_normals(inf_out, n);
    } else if (*base) {
      const PsSample s = read_sample(base_sample);
      const ClassicResult r = l2_normals(s);
      std::size_t flagged = 0;
      for (auto f : r.flagged) flagged += f;
      write_normals(base_out, r.normals);
      if (flagged) std::cerr << flagged << " pixels had no usable observations\n";
      if (s.gt_normals) std::printf("%.6f\n", mean_angular_error(r.normals, *s.gt_normals));
    } else if (*ev) {
      const bool scoring = !ev_pred.empty() || !ev_gt.empty();
      if (scoring && (ev_pred.empty() || ev_gt.empty())) throw Error("eval needs both --pred and --gt");
      if (!scoring && ev_report.empty()) throw Error("eval needs --pred and --gt, or --report");
      BenchmarkResults results;
      if (!ev_report.empty() && fs::exists(ev_report)) results = parse_benchmark_csv(read_file(ev_report));
      if (scoring) {
        const NormalMap pred = load_normals(ev_pred, ev_mask);
        const NormalMap gt = load_normals(ev_gt, ev_mask);
        const double mae = mean_angular_error(pred, gt);
        std::printf("%.6f\n", mae);
        results[ev_object][ev_method] = mae;
      }
      if (!ev_report.empty()) {
        const BenchmarkReport report = benchmark_report(results);
        atomic_write(ev_report, report.csv);
        std::cout << report.table;
      }
    } else if (*imp) {
      const PsSample s = import_diligent(imp_in);
      write_sample(imp_out, s);
      std::cout << "imported " << s.count() << " images (" << s.height() << "x" << s.width() << ") to " << imp_out
                << "\n";
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "msps: error: " << msg << "\n";
    return 1;
  }
  return 0;
}
