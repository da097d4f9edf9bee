// Energies, Gauss-Bonnet and the Onofri energy across a few test surfaces.
#include <cstdio>

#include "wlab/onofri.hpp"

int main() {
    using namespace wlab;
    auto g = build_grid(32);
    std::printf("%-36s %14s %14s %14s %14s\n", "surface", "W", "int K", "predicted", "O");
    for (auto spec : {"round:1", "ellipsoid:1,1,1.5", "perturbed_sphere:2,0,0.1", "mobius_inverted:round:1@0.3,0,0.2",
                      "lift4:0.3:ellipsoid:1,1,1.5", "branched_cover:2"}) {
        auto im = sample(make_test_surface(spec), g);
        auto c = geometry(im);
        auto e = energies(im, c);
        auto gb = willmore_gauss_bonnet(im, c);
        double O = im.surface->branches.empty() ? onofri_energy(c, conformal_factor(im, c)).total
                                                : std::numeric_limits<double>::quiet_NaN();
        std::printf("%-36s %14.8f %14.8f %14.8f %14.3e\n", spec, e.W, gb.total_curvature, gb.predicted, O);
    }
}
