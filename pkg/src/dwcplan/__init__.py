"""Traffic-driven demand modeling and microgrid planning for dynamic
wireless charging corridors.

Subpackage layout:

- ``corridor``: cell-based freeway traffic simulation
- ``energy``: vehicle power model and trajectory-to-demand conversion
- ``scenarios``: seeded disruption scenario sampling and ensembles
- ``grid``: electrical network data model and bundled case study
- ``opf``: second-order-cone optimal power flow on radial feeders
- ``planner``: storage siting, capacity sizing, scenario-robust planning
- ``config``: structured config files with strict schemas
- ``reporting``: deterministic result tables and run manifests
- ``cli``: command-line entry points
"""

__version__ = "0.1.0"
