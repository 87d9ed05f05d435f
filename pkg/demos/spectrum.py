"""Spectral density surrogate from the short-time box correlation.

For |t| below the return time the correlation of a box coboundary with
itself is the autocorrelation of psi', so its transform is |psi'^|^2,
non-negative.  The series is supported inside the grid, so no taper is needed.

    python3 demos/spectrum.py
"""
import numpy as np

from torusflow.correlation import autoconvolution_reference, make_observable, spectral_density
from torusflow.suites import canonical_test_box

box, spec = canonical_test_box()
f = make_observable(box, spec, "F", 0.05, halfwidth=0.3)
times = np.linspace(-0.6, 0.6, 241)
values = np.array([autoconvolution_reference(f, f, t) for t in times])

freqs, dens, report = spectral_density(times, values, window=None, freqs=np.linspace(0, 8, 17))
for xi, d in zip(freqs, dens):
    print(f"{xi:5.1f} {d:10.4f} " + "#" * int(60 * d / dens.max()))
print(f"clipped negative mass: {abs(report['clipped_fraction']):.2e}")
