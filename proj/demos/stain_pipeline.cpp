/*
 * Copyright 2026 The tma-debias Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Renders one synthetic spot, estimates its stain basis, normalizes it
// against the reference stains and tiles the pyramid.

#include "debias/image/png.hpp"
#include "debias/stain/macenko.hpp"
#include "debias/synth/assign.hpp"
#include "debias/synth/render.hpp"

#include <cstdio>
#include <filesystem>

using namespace debias;

int main(int argc, char** argv) {
    synth::CohortSpec spec;
    spec.n_patients = 4;
    spec.msi_rate = 0.5;
    spec.projects = {{"A", 1.0, 1.0, std::nullopt}};
    spec.glasses_per_project = 1;
    spec.spots_per_patient = 1;
    spec.mode = synth::PayloadMode::spot_image;
    spec.image.spot_px = 256;
    spec.image.disk_radius_px = 120;
    spec.image.tile_px = 64;
    spec.seed = 3;
    const auto a = synth::assign_patients(spec);
    const auto& patient = a.patients.front();
    const auto spot = synth::render_spot_image(spec, patient.patient_id, patient.spots.front().spot_id);

    const auto profile = stain::estimate_stain_matrix(spot.image);
    const auto ref = synth::reference_stains();
    std::printf("estimated H (%.3f %.3f %.3f), %.2f deg from reference\n", profile.stain_matrix(0, 0),
                profile.stain_matrix(1, 0), profile.stain_matrix(2, 0),
                stain::angle_between_deg(profile.stain_matrix.col(0), ref.col(0)));
    std::printf("estimated E (%.3f %.3f %.3f), %.2f deg from reference\n", profile.stain_matrix(0, 1),
                profile.stain_matrix(1, 1), profile.stain_matrix(2, 1),
                stain::angle_between_deg(profile.stain_matrix.col(1), ref.col(1)));

    stain::StainProfile target = profile;
    target.stain_matrix = ref;
    const auto normalized = stain::normalize_macenko(spot.image, target);
    std::printf("normalization changed pixels by %.2f on average\n", image::mean_absolute_error(spot.image, normalized));

    synth::SpotImage norm_spot{normalized, spot.mask};
    const auto tiles = synth::spot_tiles(norm_spot, spec.image.tile_px, stain::default_roi());
    std::printf("%zu ROI tiles of %d px across the pyramid\n", tiles.size(), spec.image.tile_px);

    if (argc > 1) {
        const std::filesystem::path out = argv[1];
        std::filesystem::create_directories(out);
        image::write_png(out / "spot.png", spot.image);
        image::write_png(out / "spot_normalized.png", normalized);
        std::printf("wrote %s\n", (out / "spot_normalized.png").c_str());
    }
}
