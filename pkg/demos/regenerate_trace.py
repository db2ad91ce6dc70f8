"""Rebuild the bundled synthetic VBR trace byte for byte.

    python demos/regenerate_trace.py [output-path]
"""
import sys
from pathlib import Path

from streamsim.traffic import format_trace, synthetic_vbr_trace

BUNDLED = Path(__file__).resolve().parents[1] / "src" / "streamsim" / "data" / "synthetic_vbr.txt"

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else BUNDLED
    text = format_trace(synthetic_vbr_trace(n_frames=4500, fps=25, gop=12, mean_bytes=8000, seed=2024))
    if out.exists() and out.read_text() == text:
        print(f"{out} is already up to date")
    else:
        out.write_text(text)
        print(f"wrote {out}")
