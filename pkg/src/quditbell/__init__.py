"""Simulated Bell tests on molecular spin qudits.

Modules
-------
qspace
    Spin operators, tensor products and state utilities.
model
    Spin Hamiltonians of the qubit-qudit dimer and the two-qudit trimer.
dynamics
    Unitary and pure-dephasing Lindblad propagation of pulse sequences.
pulses
    Gate specifications, pulse compilation and the SU(4) decomposition.
grape
    Gradient ascent pulse engineering.
bell
    CHSH and CGLMP functionals, optimal observables and classical bounds.
harness
    Config-driven sweeps, reports and the command line.
"""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
