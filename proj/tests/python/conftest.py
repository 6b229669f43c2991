import os
import sys

# the ctest harness points at the directory holding the built _heml extension
pymod_dir = os.environ.get("HEML_PYMOD_DIR")
if pymod_dir and pymod_dir not in sys.path:
    sys.path.insert(0, pymod_dir)
