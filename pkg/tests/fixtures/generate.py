"""Regenerate the committed fixtures. Independent of the package on purpose:
tensor files are packed with ``struct`` and the CKA reference value comes from
the centered-Gram-matrix form of HSIC, not the feature-space form the package uses.

    python3 tests/fixtures/generate.py
"""
import json
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def pack(arr: np.ndarray, code: int) -> bytes:
    fmt = {0: "<f4", 1: "<f8"}[code]
    head = b"TNS1" + bytes([1, code, arr.ndim]) + b"".join(struct.pack("<Q", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr, dtype=fmt).tobytes()


def gram_cka(x: np.ndarray, y: np.ndarray) -> float:
    n = x.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    k = h @ (x @ x.T) @ h
    l = h @ (y @ y.T) @ h
    return float(np.sum(k * l) / np.sqrt(np.sum(k * k) * np.sum(l * l)))


def main() -> None:
    rng = np.random.default_rng(20240611)
    teacher = rng.standard_normal((12, 6))
    student = teacher[:, :4] @ rng.standard_normal((4, 3)) + 0.5 * rng.standard_normal((12, 3))
    (HERE / "cka_teacher.tns").write_bytes(pack(teacher, 1))
    (HERE / "cka_student.tns").write_bytes(pack(student, 1))
    manifest = {
        "teacher": "cka_teacher.tns",
        "student": "cka_student.tns",
        "gram_oracle_cka": repr(gram_cka(teacher, student)),
    }
    (HERE / "cka_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    shapes = {1: (7,), 2: (3, 5), 3: (2, 3, 4)}
    for ndim, shape in shapes.items():
        for code, tag in ((0, "f32"), (1, "f64")):
            arr = rng.standard_normal(shape) * 10.0 ** rng.integers(-3, 4, size=shape)
            (HERE / "tensors" / f"t{ndim}d_{tag}.tns").write_bytes(pack(arr, code))
    # special values survive bit-exactly
    special = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 5e-324, np.finfo(np.float64).max])
    (HERE / "tensors" / "special_f64.tns").write_bytes(pack(special, 1))
    special32 = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 1e-45, np.finfo(np.float32).max], dtype=np.float32)
    (HERE / "tensors" / "special_f32.tns").write_bytes(pack(special32, 0))

    (HERE / "eval_true.txt").write_text("0\n0\n1\n1\n")
    (HERE / "eval_pred.txt").write_text("0\n1\n1\n1\n")


if __name__ == "__main__":
    main()
