# SPDX-License-Identifier: Apache-2.0
"""Convert the UCI HAR dataset into the two-class CSV layout read by fastgrnn.

Usage: python3 tools/prepare_har2.py "/path/to/UCI HAR Dataset" [--out data/har2]

Each output row holds 128 steps of the 9 raw inertial channels, time-major,
followed by the label. Activities 1, 3, 5 (walking, walking downstairs,
standing) map to 0 and 2, 4, 6 (walking upstairs, sitting, laying) to 1.
"""
import argparse
import pathlib
import sys

import numpy as np

SIGNALS = [
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z",
]
STEPS = 128
POSITIVE = {2, 4, 6}
EXPECTED_ROWS = {"train": 7352, "test": 2947}


def load_split(root: pathlib.Path, split: str) -> tuple[np.ndarray, np.ndarray]:
    base = root / split
    channels = []
    for name in SIGNALS:
        path = base / "Inertial Signals" / f"{name}_{split}.txt"
        channels.append(np.loadtxt(path, dtype=np.float64))
    x = np.stack(channels, axis=2)  # rows x steps x channels
    if x.shape[1] != STEPS:
        raise ValueError(f"{split}: expected {STEPS} steps, got {x.shape[1]}")
    activity = np.loadtxt(base / f"y_{split}.txt", dtype=np.int64)
    if activity.shape[0] != x.shape[0]:
        raise ValueError(f"{split}: {x.shape[0]} sequences but {activity.shape[0]} labels")
    labels = np.isin(activity, list(POSITIVE)).astype(np.int64)
    return x.reshape(x.shape[0], -1), labels


def write_csv(path: pathlib.Path, x: np.ndarray, y: np.ndarray) -> None:
    with path.open("w") as f:
        for row, label in zip(x, y):
            f.write(",".join(f"{v:.9g}" for v in row))
            f.write(f",{label}\n")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=pathlib.Path, help="extracted 'UCI HAR Dataset' directory")
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data/har2"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "test"):
        x, y = load_split(args.root, split)
        if x.shape[0] != EXPECTED_ROWS[split]:
            print(f"warning: {split} has {x.shape[0]} rows, expected {EXPECTED_ROWS[split]}", file=sys.stderr)
        write_csv(args.out / f"{split}.csv", x, y)
        print(f"{split}: {x.shape[0]} sequences, {int(y.sum())} positive -> {args.out / (split + '.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
