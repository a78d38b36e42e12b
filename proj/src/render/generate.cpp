#include "msps/render.hpp"

namespace msps {

PsSample generate_sample(std::uint64_t seed, const GenerateOptions& options) {
  RenderJob job;
  if (options.mesh) {
    job.mesh = *options.mesh;
    job.mesh_source = options.mesh_source;
  } else {
    job.mesh = marching_cubes(sample_blob_field(Rng::derive(seed, 1), options.blobs), options.grid);
    job.mesh_source = "blob";
  }
  Rng rng(Rng::derive(seed, 2));
  job.material = sample_material(rng, options.materials);
  job.lights = sample_lights(rng, options.lights, options.light_policy);
  job.height = job.width = options.resolution;
  job.seed = seed;
  return render(job);
}

}  // namespace msps
