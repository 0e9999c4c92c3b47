"""Power of T~* against rho for 5x5 ... 40x40 rectangles on 64x64."""
from _common import RESULTS, parser, run

from corrscan.experiments import emit_figure_data

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    table, out = run("figure4", args)
    plot = RESULTS / "figure4.png"
    try:
        emit_figure_data(table, "figure4", RESULTS / "figure4_data.csv", plot)
    except ImportError:
        emit_figure_data(table, "figure4", RESULTS / "figure4_data.csv")
    for r in table.rows:
        print(f"{r['shape']:<12} rho={r['rho']:.1f} power={r['power']:.3f}")
    print(f"wrote {out}")
