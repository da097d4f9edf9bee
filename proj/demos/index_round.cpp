// Second-variation spectrum of the round sphere against (l-1)l(l+1)(l+2)/2.
#include <cstdio>

#include "wlab/index_spectrum.hpp"

int main(int argc, char** argv) {
    using namespace wlab;
    int Lidx = argc > 1 ? std::atoi(argv[1]) : 4;
    auto g = build_grid(32);
    auto im = sample(make_test_surface("round:1"), g);
    auto rep = morse_index(assemble_hessian(im, EnergyKind::W, Lidx));
    std::printf("index %d  nullity %d  positive %d  (tau %.2e)\n", rep.index, rep.nullity, rep.positive, rep.tau);
    int k = 0;
    for (int l = 0; l <= Lidx; ++l) {
        double lo = rep.eigenvalues[k], hi = rep.eigenvalues[k + 2 * l];
        std::printf("l=%d  %2d copies  [%.10f, %.10f]  expected %g\n", l, 2 * l + 1, lo, hi,
                    (l - 1) * l * (l + 1) * (l + 2) / 2.0);
        k += 2 * l + 1;
    }
}
