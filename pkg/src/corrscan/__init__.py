"""Size-corrected likelihood-ratio scan for a correlated region between two channels."""
from .calibrate import (NullDistribution, TestOutcome, calibrate, p_value, run_test, simulate_alternative,
                        simulate_null)
from .lattice import ChannelPair, LatticeDomain, build_domain, build_moment_tables, otsu_mask
from .regions import FamilySpec, RegionFamily, covering_set, rasterize
from .scanstat import ScanReport, corrected_score, log_lr, pearson, scan_fast, scan_full

__version__ = "0.1.0"

__all__ = [
    "ChannelPair", "FamilySpec", "LatticeDomain", "NullDistribution", "RegionFamily", "ScanReport",
    "TestOutcome", "build_domain", "build_moment_tables", "calibrate", "corrected_score", "covering_set",
    "log_lr", "otsu_mask", "p_value", "pearson", "rasterize", "run_test", "scan_fast", "scan_full",
    "simulate_alternative", "simulate_null",
]
