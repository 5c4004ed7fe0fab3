"""Property extraction for all-atom polymer MD outputs (LAMMPS, real units)."""

__version__ = "0.1.0"

from .core import SystemTopology, TgFit, ThermoTable, Trajectory, to_json  # noqa: E402
from .exceptions import PolyPropError  # noqa: E402
from .lammps import detect_errors, parse_data_file, parse_dump, parse_thermo_log  # noqa: E402
from .report import aggregate_replicates, validate  # noqa: E402
from .structure import compute_rdf, end_to_end, unwrap  # noqa: E402
from .tg import BilinearTgRegressor, TgConfig, extract_tg  # noqa: E402
from .thermo import bulk_modulus, convergence_metrics, equilibrated_density  # noqa: E402

__all__ = [
    "__version__", "SystemTopology", "TgFit", "ThermoTable", "Trajectory", "to_json", "PolyPropError",
    "detect_errors", "parse_data_file", "parse_dump", "parse_thermo_log", "aggregate_replicates", "validate",
    "compute_rdf", "end_to_end", "unwrap", "BilinearTgRegressor", "TgConfig", "extract_tg", "bulk_modulus",
    "convergence_metrics", "equilibrated_density",
]
