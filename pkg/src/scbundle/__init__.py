"""scbundle: semiclassical bundles at desk scale.

Classical phase-space base points, finite-dimensional Hilbert fibers, Lie
group actions as bundle automorphisms, and the verification machinery tying
them together (section transforms, infinitesimal generators, group-law
reconstruction, gauge-equivalent actions).
"""

__version__ = "0.1.0"
