"""Smoke test for the nodemixup_py extension module.

Builds nothing itself: run `cargo build --release -p nodemixup-py --features
extension-module` first, or pass the path of an already built library.

    python python/smoke_test.py [path/to/libnodemixup_py.so]
"""

import importlib.util
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def find_library(arg):
    if arg:
        return Path(arg)
    for profile in ["release", "debug"]:
        for name in ["libnodemixup_py.so", "libnodemixup_py.dylib", "nodemixup_py.dll"]:
            p = ROOT / "target" / profile / name
            if p.exists():
                return p
    sys.exit("extension library not found; build it with cargo first")


def load(lib: Path, tmp: Path):
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    target = tmp / f"nodemixup_py{suffix}"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("nodemixup_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        nm = load(find_library(sys.argv[1] if len(sys.argv) > 1 else None), tmp)

        err = nm.gradcheck(seed=0)
        assert err < 1e-5, err

        nodes, rc = nm.reaching_coefficient(3, [(0, 1), (1, 2)], [0])
        assert nodes == [1, 2] and rc == [1.0, 0.0], (nodes, rc)

        z = [[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]]
        assert abs(nm.cka(z, z) - 1.0) < 1e-12

        mixed = nm.mix_adjacency(3, [(0, 1), (1, 2)], [(0, 2, 0.5)])
        assert all(abs(mixed[i][j] - mixed[j][i]) < 1e-15 for i in range(3) for j in range(3))

        data = tmp / "sbm"
        info = nm.generate_sbm(
            str(data), classes=3, per_class=30, p_in=0.2, p_out=0.02, noise=0.5,
            labels_per_class=3, valid_per_class=5, seed=3,
        )
        assert info["nodes"] == 90, info
        assert nm.dataset_summary(str(data)) == info

        result = nm.train(str(data), '{"max_epochs": 50, "seeds": [0, 1]}')
        assert 0.0 <= result["test_mean"] <= 1.0 and len(result["per_seed"]) == 2, result

        try:
            nm.reaching_coefficient(2, [(0, 1)], [0])
        except ValueError:
            pass
        else:
            raise AssertionError("diameter 1 should be rejected")

        print(f"ok: nodemixup_py {nm.__version__}, gradcheck {err:.2e}, test_mean {result['test_mean']:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
