#include "focus/config.hpp"

namespace focus {

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["sfm"] = {{"samples_per_image", c.sfm.samples_per_image},
              {"match_threshold", c.sfm.match_threshold},
              {"subpixel_factor", c.sfm.subpixel_factor},
              {"reproj_threshold_px", c.sfm.reproj_threshold},
              {"floor_z_mm", c.sfm.floor_z},
              {"sor", {{"k", c.sfm.sor.k}, {"std_ratio", c.sfm.sor.std_ratio}}},
              {"subpixel", c.sfm.subpixel},
              {"normal_aggregation", c.sfm.normal_aggregation},
              {"pca_neighbors", c.sfm.pca_neighbors}};
  j["poisson"] = poisson_sidecar_json(c.poisson);
  j["optim"] = {{"samples_per_image", c.optim.samples_per_image},
                {"epochs", {c.optim.stage1_epochs, c.optim.stage2_epochs}},
                {"learning_rate", c.optim.learning_rate},
                {"beta1", c.optim.beta1},
                {"beta2", c.optim.beta2},
                {"epsilon", c.optim.epsilon},
                {"use_uncertainty", c.optim.use_uncertainty},
                {"variance_floor", c.optim.variance_floor},
                {"translation_unit_mm", c.optim.translation_unit_mm},
                {"init_tracks", c.optim.init_tracks}};
  j["eval"] = {{"crop_z_mm", c.eval.crop_z_mm ? nlohmann::json(*c.eval.crop_z_mm) : nlohmann::json(nullptr)},
               {"samples", c.eval.samples},
               {"coverage_radius_mm", c.eval.coverage_radius_mm}};
  j["synth"] = {{"noise", {{"sigma_base", c.noise.sigma_base}, {"sigma_range", c.noise.sigma_range}}},
                {"resolution", {c.resolution.width, c.resolution.height}},
                {"ring",
                 {{"radius_mm", c.ring.radius_mm},
                  {"elevation_deg", c.ring.elevation_deg},
                  {"azimuth_offset_deg", c.ring.azimuth_offset_deg},
                  {"fill", c.ring.fill},
                  {"min_coverage", c.ring.min_coverage}}}};
  return j;
}

}  // namespace focus
