"""
genobin

Context binning, model clustering and adaptive entropy coding for
sequencing reads (bases and quality scores).
"""

__version__ = "0.1.0"

from .core.seqio import Dataset, Read, read_dataset
from .models.plan_models import CompressionPlan, get_plan
from .services.container import Archive, compress, decompress

__all__ = ["Dataset", "Read", "read_dataset", "CompressionPlan", "get_plan", "Archive", "compress", "decompress"]
