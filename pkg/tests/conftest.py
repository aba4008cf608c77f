import sys
from pathlib import Path

# Make test-local helper modules (gradcheck, reference_metrics) importable.
sys.path.insert(0, str(Path(__file__).parent))
