"""Run the Gauss-planes campaign for d = 3, 5, 10, 30, 50."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from _sweep import sweep  # noqa: E402

if __name__ == "__main__":
    sweep(str(Path(__file__).parents[1] / "configs" / "gauss-planes-dims.toml"),
          [f"gauss-planes-d{d}" for d in (3, 5, 10, 30, 50)], __doc__)
