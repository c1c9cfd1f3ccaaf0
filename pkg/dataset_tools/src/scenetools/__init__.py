"""Consumer-side tooling for generated synthetic scene datasets.

Reads the generator's documented file formats (JSONL manifest, binary PLY
point clouds, 16-bit millimeter depth PNGs with JSON sidecars) with
independent parsers, streams training crops, re-checks dataset invariants,
and renders static previews. This package deliberately does not import the
generator: everything goes through the files.
"""

from .crops import iter_crops
from .manifest import DatasetRecord, LoadedSample, load_manifest, load_sample
from .ply import read_ply
from .verify import verify_dataset

__version__ = "0.1.0"
