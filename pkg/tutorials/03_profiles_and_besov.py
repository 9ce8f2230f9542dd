"""Tutorial 3: profile gap of a compact source, and the Besov c0 test.

Part 1 convolves a space-time bump with the Oseen kernel and watches the
scaled gap to ``lambda M`` shrink. Part 2 compares radial Fourier profiles
``A(rho) = rho`` and ``rho^2`` at ``s = 2``: the first sits on the boundary
of the negative Besov space (its dyadic blocks plateau), the second belongs
to the vanishing subspace; the dyadic and heat-semigroup tests agree.
"""
import math

import numpy as np

from nscontrol import Grid
from nscontrol.asymptotics import OseenComponent, SeparableSource, profile_gap
from nscontrol.besov import RadialFourierProfile, heat_characterization
from nscontrol.forcing import ChiProfile

g = Grid(2, 64, 32 * math.pi)
W = SeparableSource([(1.0, ChiProfile(2, 2.0, 10.0))])
rep = profile_gap(OseenComponent(0, 1, 0), W, 2.0, np.geomspace(0.5, 50.0, 11), g, oversample=1)
print(f"lambda = {rep.lam:.3f}, verdict {rep.verdict}")
for t, gap in rep.rows():
    print(f"  t = {t:8.3f}   scaled gap = {gap:.3e}")

for p in (1.0, 2.0):
    b = heat_characterization(RadialFourierProfile.power_law(p), s=2.0)
    print(f"A(rho) = rho^{p:g}: dyadic {b.dyadic_verdict}, heat {b.heat_verdict}")
