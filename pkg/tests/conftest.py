import sys
from pathlib import Path

# Let tests import the shared reference decoders module.
sys.path.insert(0, str(Path(__file__).parent))
