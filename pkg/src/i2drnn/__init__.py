"""Hierarchical multi-scale RNNs with an information-theoretic sizing toolkit.

Modules: numerics (kernels and seeded RNG), model (architectures and forward
passes), training (BPTT + Adam), datagen (task generators and ingestion),
infotheory (MI estimation and rate formulas), capacity (configuration
analysis), diagnostics (trained-model probes), experiments (multi-seed
drivers), cli (command-line front end).
"""

__version__ = "0.1.0"
