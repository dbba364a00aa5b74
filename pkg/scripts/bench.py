"""Print scan vs attention scaling over a lookback grid (same kernels as `stockssm bench`)."""

import argparse

import torch

from stockssm.bench import run_bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lookbacks", default="20,40,80,160")
    ap.add_argument("--reps", type=int, default=7)
    args = ap.parse_args()
    torch.set_num_threads(1)
    rows = run_bench([int(x) for x in args.lookbacks.split(",")], reps=args.reps)
    print(f"{'L':>5} {'scan ms':>9} {'attn ms':>9} {'scan KiB':>9} {'attn KiB':>9}")
    for r in rows:
        print(f"{r.lookback:5d} {r.scan_ms:9.2f} {r.attention_ms:9.2f} "
              f"{r.scan_peak_bytes / 1024:9.0f} {r.attention_peak_bytes / 1024:9.0f}")
    print(f"t({rows[-1].lookback})/t({rows[0].lookback}): scan {rows[-1].scan_ms / rows[0].scan_ms:.1f}, "
          f"attention {rows[-1].attention_ms / rows[0].attention_ms:.1f}")


if __name__ == "__main__":
    main()
