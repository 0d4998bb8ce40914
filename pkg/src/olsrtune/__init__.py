"""Energy-aware OLSR tuning for vehicular ad hoc networks.

The package bundles a discrete-event VANET simulator with a per-packet
energy model, an OLSR node state machine parameterized by the eight
RFC 3626 knobs, a master-slave parallel genetic algorithm that searches
that parameter space under a packet-delivery-ratio constraint, and the
analysis helpers (gap, speedup, nonparametric tests) used to report runs.
"""

__version__ = "0.1.0"
