"""Power of T~* against rho for a 10x10 rectangle on 32x32, 64x64 and 128x128 lattices."""
from _common import RESULTS, parser, run

from corrscan.experiments import emit_figure_data

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    table, out = run("figure5", args)
    plot = RESULTS / "figure5.png"
    try:
        emit_figure_data(table, "figure5", RESULTS / "figure5_data.csv", plot)
    except ImportError:
        emit_figure_data(table, "figure5", RESULTS / "figure5_data.csv")
    for r in table.rows:
        print(f"{r['domain']:<9} rho={r['rho']:.1f} power={r['power']:.3f}")
    print(f"wrote {out}")
