"""
Complex word states, mixtures and measurement
=============================================

A word is a unit vector in C^n stored as amplitudes and phases.  A sentence
is a weighted mixture of its word states (a density matrix) and a feature is
the probability that the sentence passes a rank-1 measurement.
"""

# %%
import numpy as np

from qpdn.shs import (
    born_probability,
    born_probability_factored,
    interference_probability,
    mix,
    polar_add,
    superpose,
    validate_density,
)

# %% [markdown]
# Two complex numbers in polar form.  Aligned phases add amplitudes, opposite
# phases cancel, and anything in between carries an interference term.

# %%
print(polar_add((0.5, 0.0), (0.5, 0.0)))
print(polar_add((0.7, 1.2), (0.7, 1.2 - np.pi)))
for dphi in np.linspace(0, np.pi, 5):
    p = interference_probability((0.5, 0.0), (0.5, dphi))
    print(f"phase gap {dphi:4.2f}: |z1 + z2|^2 = {p:.3f}  (classical 0.5)")

# %% [markdown]
# Word states.  ``superpose`` normalises the amplitudes and keeps the phases.

# %%
good = superpose([3, 4, 0], [0.5, -0.5, 0.0])
movie = superpose([1, 1, 1], [0.0, 2.0, -1.0])
print(good.amplitudes, good.phases)

# %% [markdown]
# A sentence mixes its words.  The result is Hermitian, trace one and
# positive semidefinite.

# %%
rho = mix([good, movie], [0.7, 0.3])
print(np.round(rho, 3))
print(validate_density(rho))

# %% [markdown]
# Measuring the sentence against a probe state.  The factored form never
# builds the matrix and gives the same number.

# %%
probe = superpose([1, 2, 0], [0.4, -0.4, 0.0])
print(born_probability(rho, probe), born_probability_factored([good, movie], [0.7, 0.3], probe))

# %% [markdown]
# A complete orthonormal set of probes splits the unit of probability.

# %%
rng = np.random.default_rng(0)
q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
basis = [superpose(np.abs(q[:, j]), np.angle(q[:, j])) for j in range(3)]
probs = [born_probability(rho, v) for v in basis]
print(np.round(probs, 4), sum(probs))
