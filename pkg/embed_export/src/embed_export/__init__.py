"""Feature exporter for the TOWE toolkit.

Reads a prepared-input dump (the ``towe prepare`` JSONL format), runs a
contextual encoder over every example, and writes the binary "TFEA" feature
file plus a JSON manifest.  The trainer can then consume the features in
place of a learned embedding table.
"""

from .encoders import HashedEncoder, SentinelEncoder, resolve_encoder
from .export import ExportManifest, export_features
from .prepared import PreparedDump, PreparedExample, read_prepared

__version__ = "0.1.0"
