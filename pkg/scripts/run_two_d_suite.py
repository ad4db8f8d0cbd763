"""Run the 2-D campaign over all nine cases."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from _sweep import sweep  # noqa: E402

from intrepid.targets import CASES  # noqa: E402

if __name__ == "__main__":
    sweep(str(Path(__file__).parents[1] / "configs" / "two-d-suite.toml"), [v[0] for v in CASES.values()],
          __doc__)
